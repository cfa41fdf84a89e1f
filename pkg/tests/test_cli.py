import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from xmvae.cli import EXIT_FORMAT, EXIT_INVALID, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, main
from xmvae.config import format_config, parse_text, resolve
from xmvae.errors import ConfigError
from xmvae.latent import read_walk
from xmvae.metrics import read_curve
from xmvae.models import ModelSet

TINY = ["hidden=16,16", "latent_dim=4", "epochs=2", "batch=16"]


def run(command, *sets, config=None):
    argv = [command]
    if config:
        argv += ["--config", str(config)]
    for s in sets:
        argv += ["--set", s]
    return main(argv)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert run("generate", f"out={out}", "n=80", "seed=3") == EXIT_OK
    return out / "dataset.jsonl"


@pytest.fixture(scope="module")
def trained(tmp_path_factory, dataset):
    out = tmp_path_factory.mktemp("train")
    assert run("train", f"out={out}", f"dataset={dataset}", "holdout=20", "variant=4", *TINY) == EXIT_OK
    return out


def test_parse_text_handles_comments_and_blanks():
    cfg = parse_text("# header\n\nseed = 4  # trailing\nout=x\n")
    assert cfg == {"seed": "4", "out": "x"}
    with pytest.raises(ConfigError):
        parse_text("no equals sign")


def test_resolve_precedence(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("epochs=7\nlr=0.5\n")
    cfg = resolve("train", path, ["lr=0.25"])
    assert cfg["epochs"] == 7 and cfg["lr"] == 0.25 and cfg["batch"] == 64
    assert resolve("train", None, ["one_batch_per_pair=true"])["one_batch_per_pair"] is True
    with pytest.raises(ConfigError):
        resolve("train", None, ["bogus=1"])
    with pytest.raises(ConfigError):
        resolve("train", None, ["epochs=many"])


def test_resolved_config_reparses_to_itself():
    cfg = resolve("semisup", None, ["lr=0.001", "fractions=0.1,0.5"])
    text = format_config("semisup", cfg)
    assert resolve("semisup", None, [f"{k}={v}" for k, v in parse_text(text).items()]) == cfg


def test_generate_counts_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("generate", f"out={a}", "n=100", "label_fraction=0.25") == EXIT_OK
    assert run("generate", f"out={b}", "n=100", "label_fraction=0.25") == EXIT_OK
    lines = (a / "dataset.jsonl").read_text().splitlines()
    assert len(lines) == 100
    assert sum(json.loads(line)["labeled"] for line in lines) == 25
    assert (a / "dataset.jsonl").read_bytes() == (b / "dataset.jsonl").read_bytes()
    assert (a / "config.txt").exists()


@pytest.mark.parametrize("bad", ["n=0", "label_fraction=0", "nonsense=1", "n=ten"])
def test_generate_invalid_arguments(tmp_path, bad):
    assert run("generate", f"out={tmp_path}", bad) == EXIT_INVALID


def test_unknown_command_is_invalid():
    assert main(["fly"]) == EXIT_INVALID


def test_train_writes_artifacts(trained):
    for name in ("model.ckpt", "history.tsv", "config.txt"):
        assert (trained / name).exists()
    assert sorted(ModelSet.load(trained / "model.ckpt").decoders) == ["2d", "3d"]


def test_variant_choice_changes_checkpoint(tmp_path, dataset, trained):
    out = tmp_path / "v1"
    assert run("train", f"out={out}", f"dataset={dataset}", "holdout=20", "variant=1", *TINY) == EXIT_OK
    assert (out / "model.ckpt").read_bytes() != (trained / "model.ckpt").read_bytes()


def test_rerun_from_resolved_config_is_bit_identical(tmp_path, trained):
    before = {p.name: p.read_bytes() for p in trained.iterdir()}
    assert run("train", config=trained / "config.txt") == EXIT_OK
    assert {p.name: p.read_bytes() for p in trained.iterdir()} == before


def test_train_missing_dataset_is_io_error(tmp_path):
    assert run("train", f"out={tmp_path}", f"dataset={tmp_path / 'none.jsonl'}") == EXIT_IO


def test_train_malformed_dataset_is_format_error(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json}\n")
    assert run("train", f"out={tmp_path}", f"dataset={bad}", "holdout=0") == EXIT_FORMAT


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence_is_numerical_abort(tmp_path, dataset):
    code = run("train", f"out={tmp_path}", f"dataset={dataset}", "holdout=20", "lr=1e300", *TINY)
    assert code == EXIT_NUMERICAL


def test_eval_outputs_and_saturation(tmp_path, dataset, trained):
    out = tmp_path / "eval"
    code = run("eval", f"out={out}", f"checkpoint={trained / 'model.ckpt'}", f"dataset={dataset}",
               "holdout=20", "thresholds=0,1e9", "embed_count=10")
    assert code == EXIT_OK
    _, pck_vals = read_curve(out / "pck.csv")
    _, pcf_vals = read_curve(out / "pcf.csv")
    assert pck_vals[-1] == pcf_vals[-1] == 1.0
    assert len((out / "embeddings.csv").read_text().splitlines()) == 1 + 2 * 10


def test_eval_on_training_split_is_no_worse_than_history(tmp_path, dataset):
    run_dir = tmp_path / "fit"
    sets = [f"out={run_dir}", f"dataset={dataset}", "holdout=20", "hidden=32,32", "latent_dim=4",
            "epochs=30", "batch=16", "lr=0.001"]
    assert run("train", *sets) == EXIT_OK
    out = tmp_path / "ev"
    assert run("eval", f"out={out}", f"checkpoint={run_dir / 'model.ckpt'}", f"dataset={dataset}",
               "holdout=20", "split=train") == EXIT_OK
    train_epe = float(parse_text((out / "metrics.txt").read_text())["mean_epe"])
    last = (run_dir / "history.tsv").read_text().splitlines()[-1].split("\t")
    assert train_epe <= float(last[5])


def test_eval_corrupt_checkpoint(tmp_path, dataset):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"BADMAG" + b"\0" * 32)
    code = run("eval", f"out={tmp_path}", f"checkpoint={bad}", f"dataset={dataset}", "holdout=20")
    assert code == EXIT_FORMAT


def test_walk_outputs(tmp_path, dataset, trained):
    out = tmp_path / "walk"
    code = run("walk", f"out={out}", f"checkpoint={trained / 'model.ckpt'}", f"dataset={dataset}", "steps=11")
    assert code == EXIT_OK
    header, values = read_walk(out / "walk.csv")
    assert values.shape == (11, 1 + 42 + 63)
    np.testing.assert_allclose(values[:, 0], np.arange(11) / 10, atol=1e-15)
    ET.parse(out / "walk.svg")


def test_walk_index_out_of_range(tmp_path, dataset, trained):
    code = run("walk", f"out={tmp_path}", f"checkpoint={trained / 'model.ckpt'}", f"dataset={dataset}",
               "index2=500")
    assert code == EXIT_INVALID


def test_variants_table(tmp_path, dataset):
    out = tmp_path / "var"
    assert run("variants", f"out={out}", f"dataset={dataset}", "holdout=20", *TINY) == EXIT_OK
    rows = (out / "variants.csv").read_text().splitlines()
    assert rows[0] == "variant,2d_to_3d_mean,2d_to_3d_median,3d_to_3d_mean,3d_to_3d_median"
    assert len(rows) == 5
    # Var.1 and Var.3 have no 3D encoder
    assert rows[1].endswith("NA,NA") and rows[3].endswith("NA,NA")
    assert "NA" not in rows[2] and "NA" not in rows[4]
    first = (out / "variants.csv").read_bytes()
    assert run("variants", config=out / "config.txt") == EXIT_OK
    assert (out / "variants.csv").read_bytes() == first


def test_semisup_sweep(tmp_path, dataset):
    out = tmp_path / "semi"
    assert run("semisup", f"out={out}", f"dataset={dataset}", "holdout=20", "fractions=0.25,1.0", *TINY) == EXIT_OK
    rows = (out / "semisup.csv").read_text().splitlines()
    assert rows[0] == "fraction,var1_median_epe,var3_median_epe,improvement_ratio"
    assert len(rows) == 3


def test_semisup_rejects_partially_labeled_input(tmp_path):
    gen = tmp_path / "g"
    run("generate", f"out={gen}", "n=40", "label_fraction=0.5")
    code = run("semisup", f"out={tmp_path / 's'}", f"dataset={gen / 'dataset.jsonl'}", "holdout=10", *TINY)
    assert code == EXIT_INVALID
