import json

import numpy as np
import pytest

from diffbench.cli import RunRecord, main
from diffbench.datastore import EmbeddingSet, load_embeddings, load_manifest, save_embeddings, save_manifest
from diffbench.datastore import TileManifest
from diffbench.metrics import parse_reports
from diffbench.preprocess import read_png


def run(tmp_path, name, *argv, seed=0):
    out = tmp_path / name
    code = main(["--output", str(out), "--seed", str(seed), "--threads", "1", *argv])
    return code, out


def reports(out):
    return {r.metric_name: r for r in parse_reports((out / "reports.txt").read_text())}


@pytest.fixture(scope="module")
def gauss(tmp_path_factory):
    base = tmp_path_factory.mktemp("gauss")
    assert main(["--output", str(base), "gen-data", "gaussian", "--n", "20000"]) == 0
    return base


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    base = tmp_path_factory.mktemp("small")
    assert main(["--output", str(base), "gen-data", "gaussian", "--n", "1500", "--dim", "3"]) == 0
    return base


def test_eval_gaussian_fixture(tmp_path, gauss):
    code, out = run(tmp_path, "e", "eval", "--reference", str(gauss / "reference.emb"),
                    "--candidate", str(gauss / "candidate.emb"), "--metrics", "fd")
    assert code == 0
    assert reports(out)["fd"].value == pytest.approx(2.0, rel=0.05)
    rec = RunRecord.from_json((out / "run.json").read_text())
    assert rec.seed == 0 and rec.finished >= rec.started and rec.tool_version


def test_eval_identical_files(tmp_path, small):
    ref = str(small / "reference.emb")
    code, out = run(tmp_path, "e", "eval", "--reference", ref, "--candidate", ref, "--metrics", "fd,pr")
    assert code == 0
    r = reports(out)
    assert r["fd"].value <= 1e-8
    assert r["precision"].value == 1.0 and r["recall"].value == 1.0


def test_exit_codes(tmp_path, small, capsys):
    ref = str(small / "reference.emb")
    code, out = run(tmp_path, "k", "eval", "--reference", ref, "--candidate", ref, "--metrics", "pr", "--k", "1500")
    assert code == 2
    err = json.loads((out / "error.json").read_text())
    assert err["error"] == "UsageError" and err["exit_code"] == 2
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["exit_code"] == 2

    assert main(["--output", str(tmp_path / "x"), "no-such-command"]) == 2
    assert run(tmp_path, "c", "eval", "--reference", ref, "--candidate", ref, "--metrics", "cosine_sim")[0] == 2
    assert run(tmp_path, "m", "eval", "--reference", ref, "--candidate", ref, "--metrics", "inception")[0] == 2

    bad = tmp_path / "bad.emb"
    bad.write_bytes(b"garbage" * 10)
    assert run(tmp_path, "d", "eval", "--reference", ref, "--candidate", str(bad))[0] == 3


def test_extractor_mismatch_is_data_error(tmp_path, small):
    other = tmp_path / "other.emb"
    save_embeddings(EmbeddingSet(np.zeros((10, 1)) + np.arange(10)[:, None], "inception", "x"), other)
    code, _ = run(tmp_path, "x", "eval", "--reference", str(small / "reference.emb"), "--candidate", str(other))
    assert code == 3


def test_eval_is_deterministic_and_replayable(tmp_path, small):
    argv = ["eval", "--reference", str(small / "reference.emb"), "--candidate", str(small / "candidate.emb"),
            "--metrics", "fd,fld"]
    _, a = run(tmp_path, "a", *argv, seed=3)
    _, b = run(tmp_path, "b", *argv, seed=3)
    assert (a / "reports.txt").read_bytes() == (b / "reports.txt").read_bytes()
    rec = RunRecord.from_json((a / "run.json").read_text())
    replay = list(rec.argv)
    replay[replay.index("--output") + 1] = str(tmp_path / "replay")
    assert main(replay) == 0
    assert (tmp_path / "replay" / "reports.txt").read_bytes() == (a / "reports.txt").read_bytes()


def test_config_file_and_flag_precedence(tmp_path, small):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[run]\nseed = 11\n\n[eval]\nmetrics = fd\n")
    code, out = run(tmp_path, "c", "eval", "--reference", str(small / "reference.emb"),
                    "--candidate", str(small / "candidate.emb"))
    assert code == 0 and set(reports(out)) == {"fd", "precision", "recall"}
    out2 = tmp_path / "c2"
    assert main(["--config", str(cfg), "--output", str(out2), "eval", "--reference", str(small / "reference.emb"),
                 "--candidate", str(small / "candidate.emb")]) == 0
    assert set(reports(out2)) == {"fd"}
    assert json.loads((out2 / "run.json").read_text())["seed"] == 11
    cfg.write_text("[eval]\nbogus = 1\n[nonsense]\n")
    assert main(["--config", str(cfg), "--output", str(out2), "eval", "--reference", "a", "--candidate", "b"]) == 2


def test_bootstrap(tmp_path, gauss):
    ref, cand = str(gauss / "reference.emb"), str(gauss / "candidate.emb")
    # defaults ask for 50k rows; a 20k pool is a usage error
    code, out = run(tmp_path, "d", "bootstrap", "--reference", ref, "--candidate", cand)
    assert code == 2 and "50000" in json.loads((out / "error.json").read_text())["message"]

    argv = ["bootstrap", "--reference", ref, "--candidate", cand, "--subsample", "2000", "--replicates", "4"]
    _, a = run(tmp_path, "a", *argv)
    _, b = run(tmp_path, "b", *argv)
    assert (a / "reports.txt").read_bytes() == (b / "reports.txt").read_bytes()
    r = reports(a)["fd"]
    assert r.extras["replicates"] == 4 and r.extras["std"] > 0
    four = tmp_path / "t4"
    assert main(["--output", str(four), "--threads", "4", *argv]) == 0
    assert (four / "reports.txt").read_bytes() == (a / "reports.txt").read_bytes()

    code, full = run(tmp_path, "f", "bootstrap", "--reference", ref, "--candidate", cand,
                     "--subsample", "20000", "--replicates", "3")
    assert code == 0 and reports(full)["fd"].extras["std"] == 0.0


@pytest.fixture(scope="module")
def slides(tmp_path_factory):
    base = tmp_path_factory.mktemp("slides")
    assert main(["--output", str(base), "gen-data", "slide", "--n", "9", "--tile-size", "64",
                 "--slide-size", "192"]) == 0
    return base


def test_pipeline_expand_then_crop_is_identity(tmp_path, slides):
    argv = ["--manifest", str(slides / "manifest.tsv"), "--tiles", str(slides / "tiles"),
            "--slides", str(slides / "slides")]
    code, big = run(tmp_path, "big", "pipeline", *argv, "--preset", "256px + PNG images (all)")
    assert code == 0
    manifest = load_manifest(slides / "manifest.tsv")
    flat = tmp_path / "flat"
    flat.mkdir()
    for rec in manifest:
        img = read_png(big / rec.split / f"{rec.tile_id}.png")
        assert img.data.shape == (96, 96, 3)
        (flat / f"{rec.tile_id}.png").write_bytes((big / rec.split / f"{rec.tile_id}.png").read_bytes())
    code, back = run(tmp_path, "back", "pipeline", "--manifest", str(slides / "manifest.tsv"),
                     "--tiles", str(flat), "--guidance", "crop:64", "--validation", "crop:64")
    assert code == 0
    for rec in manifest:
        orig = read_png(slides / "tiles" / f"{rec.tile_id}.png").data
        assert np.array_equal(read_png(back / rec.split / f"{rec.tile_id}.png").data, orig)
    log = (back / "transform_log.tsv").read_text().splitlines()
    assert len(log) == 9 and all(line.split("\t")[1] == "crop:64" for line in log)


def test_pipeline_jpeg_val_out_preset(tmp_path, slides):
    code, out = run(tmp_path, "j", "pipeline", "--manifest", str(slides / "manifest.tsv"),
                    "--tiles", str(slides / "tiles"), "--slides", str(slides / "slides"),
                    "--preset", "256px + JPEG val-out only")
    assert code == 0
    ops = {line.split("\t")[0]: line.split("\t")[1] for line in (out / "transform_log.tsv").read_text().splitlines()}
    for rec in load_manifest(slides / "manifest.tsv"):
        assert ("jpeg" in ops[rec.tile_id]) == (rec.split == "val_out")


def test_pipeline_edge_cases(tmp_path, slides):
    empty = tmp_path / "empty.tsv"
    save_manifest(TileManifest(()), empty)
    code, out = run(tmp_path, "e", "pipeline", "--manifest", str(empty), "--tiles", str(slides / "tiles"),
                    "--preset", "256px + PNG images (all)")
    assert code == 0
    assert any("empty" in w for w in json.loads((out / "run.json").read_text())["warnings"])
    args = ["pipeline", "--manifest", str(slides / "manifest.tsv"), "--tiles", str(slides / "tiles")]
    assert run(tmp_path, "u", *args, "--preset", "512px + TIFF")[0] == 2
    assert run(tmp_path, "b", *args, "--preset", "256px + PNG images (all)", "--guidance", "crop:10")[0] == 2


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    base = tmp_path_factory.mktemp("train")
    code = main(["--output", str(base), "--seed", "2", "--threads", "1", "train", "--toy", "400",
                 "--steps", "6", "--batch-size", "8", "--checkpoint-every", "3", "--ema-decay", "0.5"])
    assert code == 0
    return base


def loss_rows(path):
    lines = path.read_text().splitlines()
    head = lines[0].split("\t")
    return [dict(zip(head, map(float, line.split("\t")))) for line in lines[1:]]


def test_train_outputs(trained):
    rows = loss_rows(trained / "loss_log.tsv")
    assert [int(r["step"]) for r in rows] == list(range(1, 7))
    assert all(np.isfinite(r["total"]) for r in rows)
    names = sorted(p.name for p in (trained / "checkpoints").iterdir())
    assert names == ["final.ckpt", "step_0000003.ckpt", "step_0000006.ckpt"]


def test_train_resume_continues(tmp_path, trained):
    out = tmp_path / "resumed"
    out.mkdir()
    code = main(["--output", str(out), "--seed", "2", "--threads", "1", "train", "--toy", "400",
                 "--resume", str(trained / "checkpoints" / "step_0000003.ckpt"), "--steps", "6",
                 "--batch-size", "8", "--checkpoint-every", "3", "--ema-decay", "0.5"])
    assert code == 0
    before = loss_rows(trained / "loss_log.tsv")[3:]
    after = loss_rows(out / "loss_log.tsv")
    assert [r["step"] for r in after] == [4, 5, 6]
    for a, b in zip(before, after):
        assert b["total"] == pytest.approx(a["total"], rel=0.05)


def test_train_without_conditions(tmp_path):
    code, out = run(tmp_path, "nc", "train", "--toy", "200", "--steps", "3", "--batch-size", "8",
                    "--cond-drop", "1.0", "--checkpoint-every", "0")
    assert code == 0
    assert all(r["cond_used"] == 0.0 for r in loss_rows(out / "loss_log.tsv"))


def test_train_divergence_keeps_last_checkpoint(tmp_path):
    code, out = run(tmp_path, "nan", "train", "--toy", "200", "--steps", "40", "--batch-size", "8",
                    "--lr", "1e20", "--checkpoint-every", "1")
    assert code == 4
    err = json.loads((out / "error.json").read_text())
    assert err["error"] == "NumericError"
    assert "final.ckpt" not in {p.name for p in (out / "checkpoints").iterdir()}


def test_sample_ema_switch_and_sweep(tmp_path, trained):
    ck = str(trained / "checkpoints" / "final.ckpt")
    _, on = run(tmp_path, "on", "sample", "--checkpoint", ck, "--n", "6", "--steps", "5")
    _, off = run(tmp_path, "off", "sample", "--checkpoint", ck, "--n", "6", "--steps", "5", "--ema", "off")
    d_on = json.loads((on / "run.json").read_text())["outputs"]["sample_digest"]
    d_off = json.loads((off / "run.json").read_text())["outputs"]["sample_digest"]
    assert d_on != d_off
    assert (on / "ids.txt").read_text().split() == [f"sample-{i:06d}" for i in range(6)]
    assert read_png(on / "sample-000000.png").data.shape == (32, 32, 3)
    code, sweep = run(tmp_path, "sw", "sample", "--checkpoint", ck, "--n", "3", "--steps", "2,4", "--scheme", "ode")
    assert code == 0 and (sweep / "steps_2" / "features.emb").exists() and (sweep / "steps_4" / "ids.txt").exists()
    assert run(tmp_path, "bad", "sample", "--checkpoint", str(tmp_path / "nope.ckpt"))[0] == 2


def test_sample_condition_interpolation(tmp_path, trained):
    ck = str(trained / "checkpoints" / "final.ckpt")
    rng = np.random.default_rng(0)
    conds = tmp_path / "c.emb"
    save_embeddings(EmbeddingSet(rng.standard_normal((3, 16)), "toy-teacher", "train"), conds)
    code, out = run(tmp_path, "lam", "sample", "--checkpoint", ck, "--steps", "3", "--cond", str(conds),
                    "--lambdas", "0,0.5,1", "--anchors", "0,2")
    assert code == 0
    used = load_embeddings(out / "conditions.emb").data
    src = load_embeddings(conds).data
    np.testing.assert_array_equal(used[0].astype(np.float32), src[0].astype(np.float32))
    np.testing.assert_array_equal(used[2].astype(np.float32), src[2].astype(np.float32))
    assert "lambda=0.5" in (out / "samples.tsv").read_text()
    wrong = tmp_path / "w.emb"
    save_embeddings(EmbeddingSet(rng.standard_normal((3, 5)), "toy-teacher", "x"), wrong)
    assert run(tmp_path, "w", "sample", "--checkpoint", ck, "--cond", str(wrong))[0] == 2


def test_gen_data_toy_roundtrip(tmp_path):
    from diffbench.interpolant import generate_toy_dataset, load_toy_dataset

    code, out = run(tmp_path, "toy", "gen-data", "toy", "--n", "50", seed=4)
    assert code == 0
    loaded = load_toy_dataset(out)
    ref = generate_toy_dataset(50, seed=4)
    assert np.array_equal(loaded.images, ref.images) and np.array_equal(loaded.groups, ref.groups)
    val = load_embeddings(out / "val_out.emb")
    assert val.rows == len(ref.indices("val_out")) and val.extractor_id == "toy-teacher"
    assert (out / "train_ids.txt").read_text().split()[0].startswith("toy-")
