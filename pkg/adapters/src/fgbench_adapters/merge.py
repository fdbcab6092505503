"""Sentence mergers: fold a detail clause back into its base caption.

Two backends. The "template" model inverts the detail grammar directly:
"it is X" clauses append, "the N is A" and "the color of N is A" clauses
insert the attribute before the noun's first mention. The "lm" model is
a small decoder-only transformer trained from scratch on split pairs in
the same invocation that uses it; greedy decoding keeps it deterministic
under a seed. Nothing is persisted between jobs, so the fine-tune data
travels with every lm run.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

_APPEND = re.compile(r"^it(?:\s+is|'s)\s+(.+)$", re.IGNORECASE)
_COLOR_OF = re.compile(
    r"^the\s+color\s+of\s+(?:the\s+)?(.+?)\s+(?:is|are)\s+(.+)$", re.IGNORECASE)
_ATTRIBUTE = re.compile(r"^the\s+(.+?)\s+(?:is|are)\s+(.+)$", re.IGNORECASE)

_TOKEN = re.compile(r"[a-z0-9']+|[.,!?;:]")

PAD, SEP, MERGE, EOS, UNK = "<pad>", "<sep>", "<merge>", "<eos>", "<unk>"
_SPECIALS = (PAD, SEP, MERGE, EOS, UNK)


def _trim(sentence: str) -> str:
    return sentence.strip().rstrip(".").rstrip()


def template_merge(rest: str, detail: str) -> str:
    """Merge by inverting the detail templates; always one terminal period."""
    base = _trim(rest)
    clause = _trim(detail)

    m = _APPEND.match(clause)
    if m:
        return f"{base} {m.group(1)}."

    m = _COLOR_OF.match(clause) or _ATTRIBUTE.match(clause)
    if m:
        noun, attribute = m.group(1), m.group(2)
        inserted, hits = re.subn(
            rf"\b{re.escape(noun)}\b", f"{attribute} {noun}", base, count=1,
            flags=re.IGNORECASE)
        if hits:
            return f"{inserted}."

    return f"{base} {clause}."


# ---------------------------------------------------------------------------
# Trained merger
# ---------------------------------------------------------------------------

def _words(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def _detokenize(words) -> str:
    out: list[str] = []
    for w in words:
        if out and w not in (".", ",", "!", "?", ";", ":"):
            out.append(" ")
        out.append(w)
    return "".join(out)


@dataclass(frozen=True)
class TrainedMerger:
    """A fine-tuned merge model plus the vocabulary it was trained with."""

    model: object
    vocab: tuple[str, ...]
    device: str

    def merge(self, rest: str, detail: str) -> str:
        import torch

        index = {w: i for i, w in enumerate(self.vocab)}
        unk = index[UNK]
        prefix = (
            [index.get(w, unk) for w in _words(rest)]
            + [index[SEP]]
            + [index.get(w, unk) for w in _words(detail)]
            + [index[MERGE]]
        )
        ids = torch.tensor([prefix], dtype=torch.long, device=self.device)
        out: list[str] = []
        with torch.no_grad():
            for _ in range(48):
                logits = self.model(input_ids=ids).logits
                nxt = int(logits[0, -1].argmax())
                if nxt == index[EOS]:
                    break
                out.append(self.vocab[nxt])
                ids = torch.cat(
                    [ids, torch.tensor([[nxt]], dtype=torch.long, device=self.device)],
                    dim=1)
        return _detokenize(out)


def train_merger(pairs, seed: int = 0, device: str = "cpu",
                 epochs: int = 400) -> TrainedMerger:
    """Train a small decoder-only LM on (rest, detail) -> merged sequences.

    Targets come from the template merger, which is exact on
    prepositional-phrase splits, so for those pairs this is equivalent to
    training against the original captions. Learning rate 3e-4, batch
    size 16, loss only on the merged side of each sequence.
    """
    import torch
    from transformers import GPT2Config, GPT2LMHeadModel
    from transformers import logging as hf_logging

    hf_logging.set_verbosity_error()
    pairs = [(str(r), str(d)) for r, d in pairs]
    if not pairs:
        raise ValueError("no training pairs")

    words = sorted({w for r, d in pairs
                    for w in _words(r) + _words(d) + _words(template_merge(r, d))})
    vocab = _SPECIALS + tuple(words)
    index = {w: i for i, w in enumerate(vocab)}

    sequences = []
    for rest, detail in pairs:
        seq = (
            [index[w] for w in _words(rest)]
            + [index[SEP]]
            + [index[w] for w in _words(detail)]
            + [index[MERGE]]
        )
        target = [index[w] for w in _words(template_merge(rest, detail))] + [index[EOS]]
        sequences.append((seq + target, len(seq)))

    longest = max(len(s) for s, _ in sequences)
    if longest > 128:
        raise ValueError(f"training sequence of {longest} tokens exceeds the 128 limit")

    torch.manual_seed(seed)
    torch.set_num_threads(1)
    config = GPT2Config(
        vocab_size=len(vocab), n_positions=128, n_embd=96, n_layer=2, n_head=4,
        embd_pdrop=0.0, attn_pdrop=0.0, resid_pdrop=0.0,
        bos_token_id=index[EOS], eos_token_id=index[EOS], pad_token_id=index[PAD])
    model = GPT2LMHeadModel(config).to(device)

    pad = index[PAD]
    input_ids = torch.full((len(sequences), longest), pad, dtype=torch.long)
    labels = torch.full((len(sequences), longest), -100, dtype=torch.long)
    mask = torch.zeros((len(sequences), longest), dtype=torch.long)
    for i, (seq, prefix_len) in enumerate(sequences):
        input_ids[i, : len(seq)] = torch.tensor(seq, dtype=torch.long)
        mask[i, : len(seq)] = 1
        labels[i, prefix_len:len(seq)] = input_ids[i, prefix_len:len(seq)]

    optimizer = torch.optim.AdamW(model.parameters(), lr=3e-4)
    model.train()
    for _ in range(epochs):
        for start in range(0, len(sequences), 16):
            stop = start + 16
            out = model(
                input_ids=input_ids[start:stop].to(device),
                attention_mask=mask[start:stop].to(device),
                labels=labels[start:stop].to(device))
            optimizer.zero_grad()
            out.loss.backward()
            optimizer.step()
    model.eval()
    return TrainedMerger(model=model, vocab=vocab, device=device)
