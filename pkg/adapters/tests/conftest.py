import contextlib
import io
import json
import shutil
import subprocess
from pathlib import Path

import pytest
from PIL import Image, ImageDraw

from fgbench_adapters.cli import main

# fixture palette: drawn shades, deliberately off the text tower's ideal
# values so scores reflect robustness rather than exact matches
PALETTE = {
    "red": (230, 30, 25),
    "blue": (25, 40, 230),
    "green": (20, 150, 30),
    "yellow": (240, 230, 30),
    "orange": (245, 140, 20),
    "purple": (130, 20, 130),
    "pink": (250, 150, 190),
    "brown": (140, 70, 20),
    "black": (10, 10, 10),
    "white": (245, 245, 245),
    "gray": (128, 128, 128),
}

# (image_id, figure color, ground color, caption). The last two captions
# name no colors at all, so the matcher has nothing to pin them with.
FIXTURE = [
    ("img0", "red", "white", "a red box on a white background."),
    ("img1", "blue", "yellow", "a blue box on a yellow background."),
    ("img2", "green", "black", "a green box on a black background."),
    ("img3", "orange", "blue", "an orange box on a blue background."),
    ("img4", "purple", "white", "a purple box on a white background."),
    ("img5", "brown", "gray", "a brown box on a gray background."),
    ("img6", "black", "pink", "a black box on a pink background."),
    ("img7", "yellow", "purple", "a yellow box on a purple background."),
    ("img8", "white", "green", "a woman standing on a sidewalk."),
    ("img9", "gray", "red", "a man sitting on a bench."),
]


def draw_image(path: Path, figure: str, ground: str) -> None:
    img = Image.new("RGB", (96, 96), PALETTE[ground])
    ImageDraw.Draw(img).rectangle([24, 24, 72, 72], fill=PALETTE[figure])
    img.save(path)


def write_jsonl(rows, path: Path) -> Path:
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory) -> Path:
    """Ten drawn images plus the listing files the adapters consume."""
    root = tmp_path_factory.mktemp("fixture")
    (root / "images").mkdir()
    listing, captions = [], []
    for image_id, figure, ground, text in FIXTURE:
        rel = f"images/{image_id}.png"
        draw_image(root / rel, figure, ground)
        listing.append({"image_id": image_id, "path": rel})
        captions.append({"caption_id": f"{image_id}_c0", "image_id": image_id,
                         "text": text})
    write_jsonl(listing, root / "images.jsonl")
    write_jsonl(captions, root / "captions_raw.jsonl")
    return root


def run_cli(*argv) -> tuple[int, str]:
    """Drive the adapter CLI in process; returns (exit code, stdout)."""
    out = io.StringIO()
    with contextlib.redirect_stdout(out):
        try:
            code = main([str(a) for a in argv])
        except SystemExit as exc:  # argparse usage failures
            code = exc.code
    return code, out.getvalue()


FGBENCH = shutil.which("fgbench")


def fgbench(*argv) -> subprocess.CompletedProcess:
    """Run the toolkit CLI as a separate process; files are the interface."""
    assert FGBENCH, "the fgbench console script must be installed"
    return subprocess.run([FGBENCH, *[str(a) for a in argv]],
                          capture_output=True, text=True)
