import wave
from pathlib import Path

import numpy as np
import pytest
import torch

import afprobe
from afprobe_bridge.__main__ import main
from afprobe_bridge.extract import MODEL_TIMING, ExtractSpec, extract, read_wav_16k
from afprobe_bridge.models import BridgeError, CpcModel, load_model
from afprobe_bridge.writer import write_afpr


def write_wav(path: Path, samples: np.ndarray, rate: int = 16000, channels: int = 1) -> None:
    pcm = np.round(np.clip(samples, -1.0, 32767 / 32768) * 32768).astype("<i2")
    if channels == 2:
        pcm = np.repeat(pcm, 2)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(channels)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(pcm.tobytes())


@pytest.fixture(scope="session")
def one_second_wav(tmp_path_factory):
    path = tmp_path_factory.mktemp("wavs") / "utt00.wav"
    t = np.arange(16000) / 16000.0
    write_wav(path, 0.3 * np.sin(2 * np.pi * 440.0 * t))
    return path


@pytest.fixture(scope="session")
def tiny_wav2vec2(tmp_path_factory):
    from transformers import Wav2Vec2Config, Wav2Vec2Model

    torch.manual_seed(0)
    config = Wav2Vec2Config(
        hidden_size=16,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=24,
        conv_dim=(8, 8, 8, 8, 8, 8, 8),
        conv_kernel=(10, 3, 3, 3, 3, 2, 2),
        conv_stride=(5, 2, 2, 2, 2, 2, 2),
        num_feat_extract_layers=7,
    )
    out = tmp_path_factory.mktemp("w2v2")
    Wav2Vec2Model(config).save_pretrained(out)
    return str(out)


@pytest.fixture(scope="session")
def tiny_hubert(tmp_path_factory):
    from transformers import HubertConfig, HubertModel

    torch.manual_seed(1)
    config = HubertConfig(
        hidden_size=16,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=24,
        conv_dim=(8, 8, 8, 8, 8, 8, 8),
        conv_kernel=(10, 3, 3, 3, 3, 2, 2),
        conv_stride=(5, 2, 2, 2, 2, 2, 2),
        num_feat_extract_layers=7,
    )
    out = tmp_path_factory.mktemp("hubert")
    HubertModel(config).save_pretrained(out)
    return str(out)


@pytest.fixture(scope="session")
def tiny_cpc(tmp_path_factory):
    torch.manual_seed(2)
    model = CpcModel(encoder_dim=12, context_dim=10)
    path = tmp_path_factory.mktemp("cpc") / "cpc_state.pt"
    torch.save(model.state_dict(), path)
    return str(path)


def test_wav2vec2_header_contract(tmp_path, one_second_wav, tiny_wav2vec2):
    spec = ExtractSpec("wav2vec2", [one_second_wav], tmp_path / "f", checkpoint=tiny_wav2vec2)
    (out,) = extract(spec)
    feats = afprobe.read_features(out)  # golden-bytes cross-check: primary reader
    assert feats.frame_rate == MODEL_TIMING["wav2vec2"][0]
    assert feats.offset == pytest.approx(MODEL_TIMING["wav2vec2"][1], abs=1e-9)
    assert feats.dim == 16
    # 320-sample stride, no padding: (16000 -> conv stack) = 49 frames
    assert feats.n_frames == 49
    assert feats.utterance_id == "utt00#L2"


def test_hubert_header_contract(tmp_path, one_second_wav, tiny_hubert):
    spec = ExtractSpec("hubert", [one_second_wav], tmp_path / "f", checkpoint=tiny_hubert)
    (out,) = extract(spec)
    feats = afprobe.read_features(out)
    assert feats.frame_rate == 50.0
    assert feats.dim == 16 and feats.n_frames == 49
    assert feats.utterance_id.endswith("#L2")


def test_layer_override_recorded(tmp_path, one_second_wav, tiny_wav2vec2):
    spec = ExtractSpec("wav2vec2", [one_second_wav], tmp_path / "f", checkpoint=tiny_wav2vec2, layer=1)
    (out,) = extract(spec)
    feats = afprobe.read_features(out)
    assert feats.utterance_id == "utt00#L1"
    full = extract(ExtractSpec("wav2vec2", [one_second_wav], tmp_path / "g", checkpoint=tiny_wav2vec2))
    assert afprobe.read_features(full[0]).utterance_id == "utt00#L2"
    assert not np.array_equal(feats.data, afprobe.read_features(full[0]).data)


def test_cpc_header_contract(tmp_path, one_second_wav, tiny_cpc):
    spec = ExtractSpec("cpc", [one_second_wav], tmp_path / "f", checkpoint=tiny_cpc)
    (out,) = extract(spec)
    feats = afprobe.read_features(out)
    assert feats.frame_rate == 100.0
    assert feats.offset == pytest.approx(0.005, abs=1e-9)
    assert feats.dim == 10
    # padded conv stack keeps the 160-sample stride exact over one second
    assert feats.n_frames == 100
    assert feats.utterance_id == "utt00"


def test_cpc_output_matches_module_forward(tmp_path, one_second_wav, tiny_cpc):
    model = load_model("cpc", tiny_cpc, None)
    samples = read_wav_16k(one_second_wav)
    direct = model.extract(samples)
    (out,) = extract(ExtractSpec("cpc", [one_second_wav], tmp_path / "f", checkpoint=tiny_cpc))
    assert np.array_equal(afprobe.read_features(out).data, direct)


def test_two_runs_byte_identical(tmp_path, one_second_wav, tiny_hubert):
    a = extract(ExtractSpec("hubert", [one_second_wav], tmp_path / "a", checkpoint=tiny_hubert))
    b = extract(ExtractSpec("hubert", [one_second_wav], tmp_path / "b", checkpoint=tiny_hubert))
    assert a[0].read_bytes() == b[0].read_bytes()


def test_writer_matches_primary_writer_bytes(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.standard_normal((7, 5)).astype(np.float32)
    ours = tmp_path / "bridge.afpr"
    theirs = tmp_path / "primary.afpr"
    write_afpr(ours, "utt#L9", 50.0, 0.010, data)
    afprobe.write_features(afprobe.FeatureMatrix("utt#L9", 50.0, 0.010, data), theirs)
    assert ours.read_bytes() == theirs.read_bytes()


def test_non_16k_input_rejected(tmp_path, tiny_cpc):
    bad = tmp_path / "bad.wav"
    write_wav(bad, np.zeros(8000), rate=8000)
    with pytest.raises(BridgeError, match="sample rate"):
        extract(ExtractSpec("cpc", [bad], tmp_path / "f", checkpoint=tiny_cpc))


def test_stereo_input_rejected(tmp_path, tiny_cpc):
    bad = tmp_path / "stereo.wav"
    write_wav(bad, np.zeros(16000), channels=2)
    with pytest.raises(BridgeError, match="mono"):
        extract(ExtractSpec("cpc", [bad], tmp_path / "f", checkpoint=tiny_cpc))


def test_cpc_requires_checkpoint():
    with pytest.raises(BridgeError, match="checkpoint"):
        load_model("cpc", None, None)


def test_bad_checkpoint_reported(tmp_path):
    junk = tmp_path / "junk.pt"
    junk.write_bytes(b"not a checkpoint")
    with pytest.raises(BridgeError, match="cannot load"):
        load_model("cpc", str(junk), None)


def test_cli_extract(tmp_path, one_second_wav, tiny_cpc, capsys):
    wav_list = tmp_path / "list.txt"
    wav_list.write_text(f"{one_second_wav}\n")
    out_dir = tmp_path / "feats"
    code = main(["extract", "--model", "cpc", "--wav-list", str(wav_list),
                 "--out", str(out_dir), "--checkpoint", tiny_cpc])
    assert code == 0
    assert "wrote 1 feature files" in capsys.readouterr().out
    assert afprobe.read_features(out_dir / "utt00.afpr").n_frames == 100


def test_cli_cpc_without_checkpoint_exit_2(tmp_path, one_second_wav):
    wav_list = tmp_path / "list.txt"
    wav_list.write_text(f"{one_second_wav}\n")
    assert main(["extract", "--model", "cpc", "--wav-list", str(wav_list),
                 "--out", str(tmp_path / "f")]) == 2


def test_cli_missing_wav_exit_2(tmp_path, tiny_cpc):
    wav_list = tmp_path / "list.txt"
    wav_list.write_text(str(tmp_path / "ghost.wav") + "\n")
    assert main(["extract", "--model", "cpc", "--wav-list", str(wav_list),
                 "--out", str(tmp_path / "f"), "--checkpoint", tiny_cpc]) == 2
