"""Command-line behavior: JSON summaries, reproducibility, error paths."""

import contextlib
import io
import json

import numpy as np
import pytest
from PIL import Image

from feature_export.cli import main
from feature_export.formats import read_feature_header

VOCAB = "[UNK]\nthe\ncat\nsat\nmat\nplay\n##ing\n##s\n.\n"
CORPUS = "the cat sat.\nplaying cats.\n"


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def workspace(tmp_path):
    (tmp_path / "vocab.txt").write_text(VOCAB, encoding="utf-8")
    (tmp_path / "corpus.txt").write_text(CORPUS, encoding="utf-8")
    rng = np.random.default_rng(0)
    lines = []
    for i in range(3):
        arr = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        path = tmp_path / f"im{i}.png"
        Image.fromarray(arr).save(path)
        lines.append(f"{i}\tim{i}\t{path}\n")
    (tmp_path / "manifest.tsv").write_text("".join(lines), encoding="utf-8")
    return tmp_path


def derive_text(ws, out="enc.npz", seed=0):
    code, stdout, _ = run(
        ["derive-encoder", "--kind", "text", "--vocab", ws / "vocab.txt",
         "--hidden", 8, "--seed", seed, "--out", ws / out]
    )
    assert code == 0
    return json.loads(stdout)


def derive_image(ws, out="img.npz"):
    code, stdout, _ = run(
        ["derive-encoder", "--kind", "image", "--width", 6, "--input-size", 8,
         "--out", ws / out]
    )
    assert code == 0
    return json.loads(stdout)


def test_derive_text_summary(workspace):
    summary = derive_text(workspace)
    assert summary == {"kind": "text", "pieces": 9, "hidden_size": 8, "feature_dim": 32}
    assert (workspace / "enc.npz").is_file()


def test_derive_image_summary(workspace):
    summary = derive_image(workspace)
    assert summary == {"kind": "image", "width": 6, "input_size": 8}


def test_export_tokens_end_to_end(workspace):
    derive_text(workspace)
    code, stdout, stderr = run(
        ["export-tokens", "--corpus", workspace / "corpus.txt",
         "--encoder", workspace / "enc.npz", "--out", workspace / "tokens.vkft"]
    )
    assert code == 0
    # Sentences: 4 pieces (the cat sat .) and 5 (play ##ing cat ##s .).
    assert json.loads(stdout) == {"sentences": 2, "tokens": 9, "dim": 32}
    assert "9 token rows" in stderr
    assert read_feature_header(workspace / "tokens.vkft") == (9, 32, "token_hidden")
    assert read_feature_header(workspace / "tokens_cls.vkft") == (2, 32, "sentence_cls")


def test_export_tokens_is_reproducible_from_flags(workspace):
    derive_text(workspace, out="a.npz", seed=3)
    derive_text(workspace, out="b.npz", seed=3)
    for enc, out in (("a.npz", "a.vkft"), ("b.npz", "b.vkft")):
        code, _, _ = run(
            ["export-tokens", "--corpus", workspace / "corpus.txt",
             "--encoder", workspace / enc, "--out", workspace / out]
        )
        assert code == 0
    assert (workspace / "a.vkft").read_bytes() == (workspace / "b.vkft").read_bytes()


def test_export_tokens_explicit_cls_out(workspace):
    derive_text(workspace)
    code, _, _ = run(
        ["export-tokens", "--corpus", workspace / "corpus.txt",
         "--encoder", workspace / "enc.npz", "--out", workspace / "t.vkft",
         "--cls-out", workspace / "sent.vkft"]
    )
    assert code == 0
    assert read_feature_header(workspace / "sent.vkft")[2] == "sentence_cls"


def test_export_images_end_to_end(workspace):
    derive_image(workspace)
    code, stdout, stderr = run(
        ["export-images", "--manifest", workspace / "manifest.tsv",
         "--encoder", workspace / "img.npz", "--out", workspace / "images.vkft",
         "--batch-size", 2]
    )
    assert code == 0
    assert json.loads(stdout) == {"images": 3, "dim": 6}
    assert "3 image rows" in stderr
    assert read_feature_header(workspace / "images.vkft") == (3, 6, "image_embedding")


def test_text_derive_requires_vocab(workspace):
    code, _, stderr = run(
        ["derive-encoder", "--kind", "text", "--out", workspace / "enc.npz"]
    )
    assert code == 1
    assert "error: --vocab is required" in stderr


def test_wrong_kind_checkpoint_fails_cleanly(workspace):
    derive_image(workspace)
    code, _, stderr = run(
        ["export-tokens", "--corpus", workspace / "corpus.txt",
         "--encoder", workspace / "img.npz", "--out", workspace / "t.vkft"]
    )
    assert code == 1
    assert "error:" in stderr and "expected 'text'" in stderr


def test_missing_corpus_fails_cleanly(workspace):
    derive_text(workspace)
    code, _, stderr = run(
        ["export-tokens", "--corpus", workspace / "absent.txt",
         "--encoder", workspace / "enc.npz", "--out", workspace / "t.vkft"]
    )
    assert code == 1
    assert stderr.startswith("error:")


def test_encoder_and_backbone_are_mutually_exclusive(workspace):
    with pytest.raises(SystemExit) as excinfo:
        run(
            ["export-tokens", "--corpus", workspace / "corpus.txt",
             "--encoder", "a.npz", "--backbone", "b", "--out", workspace / "t.vkft"]
        )
    assert excinfo.value.code == 2


def test_encoder_source_is_required(workspace):
    with pytest.raises(SystemExit) as excinfo:
        run(["export-tokens", "--corpus", workspace / "corpus.txt", "--out", workspace / "t.vkft"])
    assert excinfo.value.code == 2


def test_unknown_flag_exits_with_usage_error(workspace):
    with pytest.raises(SystemExit) as excinfo:
        run(["export-tokens", "--nope"])
    assert excinfo.value.code == 2
