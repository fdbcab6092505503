"""Model-backed adapters producing the benchmark toolkit's file formats.

Each adapter is a standalone process: it reads one input file, runs a
backend (a miniature builtin model by default), and writes one output
file in a format the toolkit's CLI accepts. The two packages never
import each other; files are the whole interface.
"""

from fgbench_adapters.jobs import AdapterJob, AdapterInputError, run_adapter

__all__ = ["AdapterJob", "AdapterInputError", "run_adapter"]
