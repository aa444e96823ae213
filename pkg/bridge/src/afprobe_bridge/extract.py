"""Feature dumping: one afprobe feature file per input utterance.

Frame timing follows the toolkit's labeling conventions: 50 Hz with a 0.010 s
offset for wav2vec 2.0 / HuBERT (320-sample stride), 100 Hz with a 0.005 s
offset for CPC-style models (160-sample stride) -- half a stride as the
receptive-field center approximation. The extracted layer is recorded as a
"#L<n>" suffix on the stored utterance id. Utterances are processed one at a
time (no batching, no padding) so extraction is bit-deterministic.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .models import BridgeError, LoadedModel, load_model
from .writer import write_afpr

SAMPLE_RATE = 16000

MODEL_TIMING = {
    "wav2vec2": (50.0, 0.010),
    "hubert": (50.0, 0.010),
    "cpc": (100.0, 0.005),
}


@dataclass
class ExtractSpec:
    model: str
    wav_paths: list[Path]
    out_dir: Path
    checkpoint: str | None = None
    layer: int | None = None  # None = final context layer

    def __post_init__(self) -> None:
        if self.model not in MODEL_TIMING:
            raise BridgeError(f"unknown model family {self.model!r}")
        self.wav_paths = [Path(p) for p in self.wav_paths]
        self.out_dir = Path(self.out_dir)


def read_wav_16k(path: Path) -> np.ndarray:
    """16-bit PCM mono 16 kHz only; anything else is a hard error (no silent
    resampling)."""
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1:
            raise BridgeError(f"{path}: expected mono, got {fh.getnchannels()} channels")
        if fh.getsampwidth() != 2:
            raise BridgeError(f"{path}: expected 16-bit PCM")
        if fh.getframerate() != SAMPLE_RATE:
            raise BridgeError(
                f"{path}: sample rate {fh.getframerate()} != {SAMPLE_RATE}; resample upstream"
            )
        raw = fh.readframes(fh.getnframes())
    return np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0


def utterance_id_for(path: Path, model: LoadedModel) -> str:
    if model.layer is None:
        return path.stem
    return f"{path.stem}#L{model.layer}"


def extract(spec: ExtractSpec) -> list[Path]:
    """Run the checkpoint over every wav and write one feature file each."""
    model = load_model(spec.model, spec.checkpoint, spec.layer)
    frame_rate, offset = MODEL_TIMING[spec.model]
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for wav_path in spec.wav_paths:
        samples = read_wav_16k(wav_path)
        feats = model.extract(samples)
        out_path = spec.out_dir / f"{wav_path.stem}.afpr"
        write_afpr(out_path, utterance_id_for(wav_path, model), frame_rate, offset, feats)
        written.append(out_path)
    return written


def read_wav_list(path: str | Path) -> list[Path]:
    paths = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            text = line.strip()
            if text:
                paths.append(Path(text))
    if not paths:
        raise BridgeError(f"{path}: empty wav list")
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise BridgeError(f"wav files not found: {missing}")
    return paths
