"""Checkpoint-to-feature-file bridge for the afprobe toolkit."""

from .extract import ExtractSpec, MODEL_TIMING, extract
from .writer import write_afpr

__version__ = "0.1.0"
