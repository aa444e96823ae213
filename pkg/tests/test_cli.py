import json
from importlib import resources

import pytest

from afprobe.cli import main
from conftest import build_corpus, write_corpus_manifest

FIXDIR = resources.files("afprobe").joinpath("data/fixtures")


def fixture_paths(corpus: str) -> str:
    return ",".join(
        str(FIXDIR.joinpath(f"{corpus}_{s}.json")) for s in ("mfcc", "cpc", "wav2vec2", "hubert")
    )


def test_no_arguments_usage_exit_1(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_subcommand_exit_1():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_correlate_reproduces_published_correlation(capsys, tmp_path):
    report = tmp_path / "corr.json"
    assert main(["correlate", "--inputs", fixture_paths("timit"), "--report", str(report)]) == 0
    out = capsys.readouterr().out
    assert "|r| = 0.949" in out
    saved = json.loads(report.read_text())
    assert saved["abs_r"] == pytest.approx(0.949, abs=1e-3)
    assert saved["r"] == pytest.approx(-0.949, abs=1e-3)


def test_correlate_mboshi(capsys):
    assert main(["correlate", "--inputs", fixture_paths("mboshi")]) == 0
    assert "|r| = 0.990" in capsys.readouterr().out


def test_correlate_too_few_systems_exit_2():
    two = ",".join(str(FIXDIR.joinpath(f"timit_{s}.json")) for s in ("mfcc", "cpc"))
    assert main(["correlate", "--inputs", two]) == 2


def test_loss_check_small(capsys):
    assert main(["loss-check", "--seeds", "3"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert out.count("pass") >= 6


def test_per_cli(tmp_path, capsys):
    ref = tmp_path / "ref.trn"
    hyp = tmp_path / "hyp.trn"
    ref.write_text("u1\ta b c\nu2\ta b\n")
    hyp.write_text("u1\ta c\nu2\ta b\n")
    report = tmp_path / "per.json"
    assert main(["per", "--ref", str(ref), "--hyp", str(hyp), "--report", str(report)]) == 0
    out = capsys.readouterr().out
    assert "%PER          20.0" in out
    saved = json.loads(report.read_text())
    assert saved["per"] == pytest.approx(0.2)
    assert saved["deletions"] == 1


def test_per_missing_file_exit_2(tmp_path):
    ref = tmp_path / "ref.trn"
    ref.write_text("u1\ta\n")
    assert main(["per", "--ref", str(ref), "--hyp", str(tmp_path / "nope.trn")]) == 2


def test_mfcc_bad_path_exit_2(tmp_path):
    assert main(["mfcc", "--wav", str(tmp_path / "none"), "--out", str(tmp_path / "o")]) == 2


def test_mfcc_single_file_and_context_1(tmp_path):
    import numpy as np

    from afprobe import read_features
    from afprobe.mfcc import write_wav

    wav = tmp_path / "solo.wav"
    write_wav(wav, 0.2 * np.sin(2 * np.pi * 500 * np.arange(8000) / 16000), 16000)
    out = tmp_path / "feats"
    assert main(["mfcc", "--wav", str(wav), "--out", str(out), "--context", "1"]) == 0
    feats = read_features(out / "solo.afpr")
    assert feats.dim == 39 and feats.utterance_id == "solo"


def test_threads_env_fallback(monkeypatch):
    from afprobe.cli import RunConfig

    monkeypatch.setenv("AFPROBE_THREADS", "3")
    assert RunConfig(threads=0).resolved_threads() == 3
    assert RunConfig(threads=2).resolved_threads() == 2
    monkeypatch.delenv("AFPROBE_THREADS")
    assert RunConfig(threads=0).resolved_threads() >= 1


def test_pipeline_end_to_end(tmp_path, capsys):
    wav_dir, ali_dir, utts = build_corpus(tmp_path, n_utts=6, seed=5, utt_seconds=0.5)
    feat_dir = tmp_path / "feats"
    assert main(["mfcc", "--wav", str(wav_dir), "--out", str(feat_dir), "--context", "5"]) == 0
    manifest = write_corpus_manifest(tmp_path, feat_dir, ali_dir, utts, split_at=4)

    labeled_train = tmp_path / "train.afls"
    labeled_test = tmp_path / "test.afls"
    assert main(["label", "--manifest", str(manifest), "--split", "train", "--out", str(labeled_train)]) == 0
    assert main(["label", "--manifest", str(manifest), "--split", "test", "--out", str(labeled_test)]) == 0

    probe_path = tmp_path / "probe.bin"
    assert main(["train-probe", "--train", str(labeled_train), "--out", str(probe_path), "--epochs", "30"]) == 0

    report = tmp_path / "report.json"
    assert main(["eval-probe", "--probe", str(probe_path), "--test", str(labeled_test),
                 "--report", str(report), "--name", "synthetic-mfcc"]) == 0
    out = capsys.readouterr().out
    assert "Avg" in out
    saved = json.loads(report.read_text())
    assert saved["name"] == "synthetic-mfcc"
    assert 0.0 <= saved["averaged"] <= 1.0
    assert len(saved["per_af"]) == 7

    # identical rerun produces byte-identical report
    report2 = tmp_path / "report2.json"
    assert main(["eval-probe", "--probe", str(probe_path), "--test", str(labeled_test),
                 "--report", str(report2), "--name", "synthetic-mfcc"]) == 0
    assert report.read_bytes() == report2.read_bytes()


def test_label_rejects_unmapped_corpus_phone(tmp_path):
    wav_dir, ali_dir, utts = build_corpus(tmp_path, n_utts=2, seed=6, utt_seconds=0.5)
    (ali_dir / f"{utts[0]}.phn").write_text("0 4000 qqq\n4000 8000 aa\n")
    feat_dir = tmp_path / "feats"
    assert main(["mfcc", "--wav", str(wav_dir), "--out", str(feat_dir)]) == 0
    manifest = write_corpus_manifest(tmp_path, feat_dir, ali_dir, utts, split_at=2)
    out = tmp_path / "l.afls"
    assert main(["label", "--manifest", str(manifest), "--split", "train", "--out", str(out)]) == 2
