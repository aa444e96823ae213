"""Model loading and single-utterance forward passes.

wav2vec 2.0 and HuBERT checkpoints load through transformers (hub id or local
directory). CPC-style checkpoints are plain torch state dicts for the
architecture defined here: a 5-layer strided convolutional encoder with
kernel sizes (10, 8, 4, 4, 4) and strides (5, 4, 2, 2, 2) feeding a 1-layer
GRU context network, 160 samples per output frame at 16 kHz. Converting a
third-party CPC checkpoint into this state-dict naming is up to the caller.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn


class BridgeError(RuntimeError):
    """Checkpoint or input problems; the CLI maps this to exit code 2."""


class CpcModel(nn.Module):
    # padding keeps the stride product exact: T_out = ceil(N / 160)
    CONV_SPECS = ((10, 5, 3), (8, 4, 2), (4, 2, 1), (4, 2, 1), (4, 2, 1))

    def __init__(self, encoder_dim: int = 256, context_dim: int = 256):
        super().__init__()
        layers: list[nn.Module] = []
        in_channels = 1
        for kernel, stride, pad in self.CONV_SPECS:
            layers.append(nn.Conv1d(in_channels, encoder_dim, kernel, stride=stride, padding=pad))
            layers.append(nn.ReLU())
            in_channels = encoder_dim
        self.encoder = nn.Sequential(*layers)
        self.context = nn.GRU(encoder_dim, context_dim, batch_first=True)

    def forward(self, samples: torch.Tensor) -> torch.Tensor:
        z = self.encoder(samples.view(1, 1, -1)).transpose(1, 2)  # (1, T, enc)
        c, _ = self.context(z)
        return c[0]


class LoadedModel:
    """A checkpoint ready to map a 16 kHz waveform to (T, dim) features."""

    def __init__(self, family: str, forward, dim: int, layer: int | None):
        self.family = family
        self._forward = forward
        self.dim = dim
        self.layer = layer  # None for models without a layer axis (CPC)

    def extract(self, samples: np.ndarray) -> np.ndarray:
        x = torch.from_numpy(np.asarray(samples, dtype=np.float32))
        with torch.no_grad():
            out = self._forward(x)
        feats = out.cpu().numpy().astype(np.float32, copy=False)
        if feats.ndim != 2 or feats.shape[1] != self.dim:
            raise BridgeError(f"unexpected output shape {feats.shape} from {self.family}")
        return feats


def _load_transformer(family: str, checkpoint: str, layer: int | None) -> LoadedModel:
    try:
        if family == "wav2vec2":
            from transformers import Wav2Vec2Model as Model
        else:
            from transformers import HubertModel as Model
        model = Model.from_pretrained(checkpoint)
    except Exception as exc:
        raise BridgeError(f"cannot load {family} checkpoint {checkpoint!r}: {exc}") from exc
    model.eval()
    n_layers = model.config.num_hidden_layers
    resolved = n_layers if layer is None else layer
    if not (0 <= resolved <= n_layers):
        raise BridgeError(f"layer {resolved} outside 0..{n_layers} for {checkpoint!r}")

    def forward(x: torch.Tensor) -> torch.Tensor:
        out = model(x.view(1, -1), output_hidden_states=True)
        return out.hidden_states[resolved][0]

    return LoadedModel(family, forward, model.config.hidden_size, resolved)


def _load_cpc(checkpoint: str) -> LoadedModel:
    try:
        state = torch.load(checkpoint, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise BridgeError(f"cannot load cpc checkpoint {checkpoint!r}: {exc}") from exc
    try:
        encoder_dim = state["encoder.0.weight"].shape[0]
        context_dim = state["context.weight_hh_l0"].shape[1]
    except KeyError as exc:
        raise BridgeError(f"{checkpoint!r} is not a bridge CPC state dict: missing {exc}") from exc
    model = CpcModel(encoder_dim, context_dim)
    try:
        model.load_state_dict(state)
    except Exception as exc:
        raise BridgeError(f"cpc state dict mismatch for {checkpoint!r}: {exc}") from exc
    model.eval()
    return LoadedModel("cpc", model.forward, context_dim, None)


DEFAULT_CHECKPOINTS = {
    "wav2vec2": "facebook/wav2vec2-base",
    "hubert": "facebook/hubert-base-ls960",
}


def load_model(family: str, checkpoint: str | None, layer: int | None) -> LoadedModel:
    if family in ("wav2vec2", "hubert"):
        ckpt = checkpoint or DEFAULT_CHECKPOINTS[family]
        return _load_transformer(family, ckpt, layer)
    if family == "cpc":
        if checkpoint is None:
            raise BridgeError("cpc extraction requires --checkpoint (a torch state-dict path)")
        if layer is not None:
            raise BridgeError("cpc has no --layer axis; the GRU context output is extracted")
        return _load_cpc(checkpoint)
    raise BridgeError(f"unknown model family {family!r}")
