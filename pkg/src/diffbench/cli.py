"""Command-line entry point.

    diffbench [--config FILE] [--seed N] [--threads N] [--output DIR] <command> ...

Commands: eval, pipeline, train, sample, bootstrap, gen-data. Every run
writes ``run.json`` (a RunRecord) to the output directory; metric commands
also write ``reports.txt``. Exit codes: 0 ok, 2 usage, 3 data, 4 numeric.
Failures print a one-line JSON error record on stderr and, when an output
directory is known, save it as ``error.json``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .datastore import (
    EmbeddingSet,
    TileManifest,
    TileRecord,
    load_embeddings,
    load_manifest,
    pair_by_id,
    read_id_list,
    save_embeddings,
    save_manifest,
    write_id_list,
)
from .errors import DataError, DiffbenchError, UsageError
from .metrics import (
    DEFAULT_K,
    BootstrapSpec,
    MetricReport,
    bootstrap,
    fd_between,
    fld,
    format_reports,
    paired_cosine,
    precision_recall,
)
from .metrics.bootstrap import DEFAULT_REPLICATES, DEFAULT_SUBSAMPLE

log = logging.getLogger("diffbench")

EXIT_OK = 0
METRIC_ALIASES = {"pr": ("precision", "recall"), "cosine": ("cosine_sim",)}


@dataclass
class RunRecord:
    command: str
    argv: list
    config: dict
    seed: int
    tool_version: str = __version__
    started: float = field(default_factory=time.time)
    finished: float | None = None
    reports: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = asdict(self)
        d["reports"] = [r.to_line() for r in self.reports]
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        d = json.loads(text)
        d["reports"] = [MetricReport.from_line(line) for line in d["reports"]]
        return cls(**d)


# ---------------------------------------------------------------- helpers

def _csv(text: str, cast=str) -> list:
    try:
        return [cast(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"cannot parse list {text!r}") from None


def _existing(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} {p} does not exist")
    return p


def _set_threads(n: int) -> None:
    import torch

    torch.set_num_threads(max(1, n))


def _section(args, name: str) -> dict:
    return dict(args.ini.get(name, {}))


def _pick(args, attr: str, section: dict, key: str, default, cast=str):
    """CLI flag beats config file beats built-in default."""
    v = getattr(args, attr, None)
    if v is not None:
        return v
    if key in section:
        try:
            return cast(section[key])
        except ValueError:
            raise UsageError(f"config key {key}: cannot parse {section[key]!r}") from None
    return default


def _load_set(path, what: str, extractor: str | None) -> EmbeddingSet:
    emb = load_embeddings(_existing(path, what))
    if extractor and emb.extractor_id != extractor:
        raise UsageError(f"{what} was produced by {emb.extractor_id!r}, not {extractor!r}")
    return emb


def _check_pair(ref: EmbeddingSet, cand: EmbeddingSet) -> None:
    if ref.extractor_id != cand.extractor_id:
        raise DataError(f"extractor mismatch: {ref.extractor_id!r} vs {cand.extractor_id!r}")
    if ref.dim != cand.dim:
        raise DataError(f"dimension mismatch: {ref.dim} vs {cand.dim}")


def _expand_metrics(names: list[str]) -> list[str]:
    out = []
    for n in names:
        for m in METRIC_ALIASES.get(n, (n,)):
            if m not in ("fd", "precision", "recall", "fld", "cosine_sim"):
                raise UsageError(f"unknown metric {n!r}")
            if m not in out:
                out.append(m)
    return out


def _fld_split(ref: EmbeddingSet, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Half the reference fits the mixture variances, the other half is the test set."""
    perm = np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), 0xF1D])).permutation(ref.rows)
    half = ref.rows // 2
    return ref.data[np.sort(perm[:half])], ref.data[np.sort(perm[half:])]


def summary_table(reports) -> str:
    rows = [("metric", "value", "extractor", "reference", "candidate")]
    for r in reports:
        value = f"{r.value:.6g}"
        if "std" in r.extras:
            value += f" ± {r.extras['std']:.3g}"
        rows.append((r.metric_name, value, r.extractor_id, r.reference_tag, r.candidate_tag))
    widths = [max(len(row[i]) for row in rows) for i in range(5)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


# ---------------------------------------------------------------- eval / bootstrap

def metric_function(name: str, ref: EmbeddingSet, args, seed: int, fit_test=None):
    """Callable candidate -> value, closing over the fixed reference set."""
    if name == "fd":
        return lambda cand: fd_between(ref, cand)
    if name in ("precision", "recall"):
        i = 0 if name == "precision" else 1
        return lambda cand: precision_recall(ref, cand, args.k)[i]
    if name == "fld":
        fit, test = fit_test if fit_test is not None else _fld_split(ref, seed)
        return lambda cand: fld(cand, fit, test)
    raise UsageError(f"metric {name!r} cannot run here")


def cmd_eval(args, rec: RunRecord) -> None:
    sec = _section(args, "eval")
    ref = _load_set(args.reference, "reference", args.extractor)
    cand = _load_set(args.candidate, "candidate", args.extractor)
    _check_pair(ref, cand)
    metrics = _expand_metrics(_csv(_pick(args, "metrics", sec, "metrics", "fd,precision,recall")))
    args.k = _pick(args, "k", sec, "k", DEFAULT_K, int)
    rec.config.update(metrics=metrics, k=args.k)
    tags = dict(extractor_id=ref.extractor_id, reference_tag=ref.source_tag,
                candidate_tag=cand.source_tag, seed=rec.seed)
    fit_test = None
    if args.fld_fit is not None:
        fit = _load_set(args.fld_fit, "FLD fit set", ref.extractor_id)
        fit_test = (fit.data, ref.data)
    pr = None
    for m in metrics:
        if m == "cosine_sim":
            if not (args.reference_ids and args.candidate_ids):
                raise UsageError("cosine_sim needs --reference-ids and --candidate-ids")
            pairs = pair_by_id(ref, read_id_list(args.reference_ids), cand, read_id_list(args.candidate_ids))
            mean, std, _ = paired_cosine(pairs)
            rec.reports.append(MetricReport("cosine_sim", mean, extras={"std": std, "pairs": cand.rows}, **tags))
        elif m in ("precision", "recall"):
            if pr is None:
                pr = precision_recall(ref, cand, args.k)
            rec.reports.append(MetricReport(m, pr[m == "recall"], extras={"k": args.k}, **tags))
        else:
            value = metric_function(m, ref, args, rec.seed, fit_test)(cand)
            rec.reports.append(MetricReport(m, value, **tags))


def cmd_bootstrap(args, rec: RunRecord) -> None:
    sec = _section(args, "bootstrap")
    ref = _load_set(args.reference, "reference", args.extractor)
    pool = _load_set(args.candidate, "candidate pool", args.extractor)
    _check_pair(ref, pool)
    spec = BootstrapSpec(
        subsample_size=_pick(args, "subsample", sec, "subsample_size", DEFAULT_SUBSAMPLE, int),
        replicates=_pick(args, "replicates", sec, "replicates", DEFAULT_REPLICATES, int),
        seed=rec.seed,
    )
    metrics = _expand_metrics(_csv(_pick(args, "metrics", sec, "metrics", "fd")))
    args.k = _pick(args, "k", sec, "k", DEFAULT_K, int)
    rec.config.update(metrics=metrics, subsample_size=spec.subsample_size, replicates=spec.replicates, k=args.k)
    for m in metrics:
        if m == "cosine_sim":
            raise UsageError("cosine_sim is paired and cannot be bootstrapped over a pool")
        mean, std, values = bootstrap(metric_function(m, ref, args, rec.seed), pool, spec, args.threads)
        rec.reports.append(MetricReport(
            m, mean, ref.extractor_id, ref.source_tag, pool.source_tag, rec.seed,
            {"std": std, "replicates": spec.replicates, "subsample_size": spec.subsample_size}))
        rec.outputs.setdefault("replicate_values", {})[m] = [float(v) for v in values]


# ---------------------------------------------------------------- pipeline

def cmd_pipeline(args, rec: RunRecord) -> None:
    from .preprocess import PipelineConfig, parse_chain, resolve_preset, run_pipeline

    sec = _section(args, "pipeline")
    preset = _pick(args, "preset", sec, "preset", None)
    guidance = _pick(args, "guidance", sec, "guidance", None)
    validation = _pick(args, "validation", sec, "validation", None)
    if preset is not None:
        if guidance is not None or validation is not None:
            raise UsageError("give either a preset or explicit chains, not both")
        config = resolve_preset(preset)
    else:
        config = PipelineConfig(parse_chain(guidance or ""), parse_chain(validation or ""), "custom")
    manifest = load_manifest(_existing(args.manifest, "manifest"))
    tiles = _existing(args.tiles, "tile directory")
    slides = _existing(args.slides, "slide directory") if args.slides else None
    rec.config.update(preset=config.name,
                      guidance=",".join(_op_text(o) for o in config.guidance),
                      validation=",".join(_op_text(o) for o in config.validation))
    result = run_pipeline(manifest, tiles, args.output, config, slides)
    rec.warnings.extend(result.warnings)
    rec.outputs.update(processed=result.processed, failed=len(result.failures),
                       transform_log=str(Path(args.output) / "transform_log.tsv"))


def _op_text(op) -> str:
    text = ":".join([op.kind] + [str(a).replace(":", "") for a in op.args])
    return text + (f"@{op.only_split}" if op.only_split else "")


# ---------------------------------------------------------------- train

LOSS_COLUMNS = ("step", "total", "diffusion", "alignment", "reconstruction", "kl", "cond_used")


def cmd_train(args, rec: RunRecord) -> None:
    from .errors import NumericError
    from .interpolant import Trainer, generate_toy_dataset, load_toy_dataset
    from .interpolant.config import model_config, train_config

    tcfg = train_config(args.ini)
    overrides = {k: getattr(args, k) for k in ("steps", "batch_size", "lr", "ema_decay", "cond_drop",
                                               "align_weight", "checkpoint_every", "overfit_batch")
                 if getattr(args, k) is not None}
    tcfg = replace(tcfg, seed=rec.seed, **overrides)
    mcfg = model_config(args.ini)
    if args.data:
        data = load_toy_dataset(_existing(args.data, "dataset directory"))
    else:
        data = generate_toy_dataset(args.toy, seed=rec.seed)
    out = Path(args.output)
    ckdir = out / "checkpoints"
    ckdir.mkdir(parents=True, exist_ok=True)
    if args.resume:
        trainer = Trainer.resume(_existing(args.resume, "checkpoint"), data, cfg=tcfg)
        mcfg = trainer.model.cfg
    else:
        trainer = Trainer.create(mcfg, tcfg, data)
    rec.config.update(model=mcfg.to_dict(), train=tcfg.to_dict(), dataset_size=len(data))

    log_path = out / "loss_log.tsv"
    new_log = not (args.resume and log_path.exists())
    fh = open(log_path, "w" if new_log else "a", encoding="utf-8")
    if new_log:
        fh.write("\t".join(LOSS_COLUMNS) + "\n")
    last_good = None

    def on_step(tr, row):
        nonlocal last_good
        fh.write("\t".join(str(row["step"]) if c == "step" else repr(float(row[c])) for c in LOSS_COLUMNS) + "\n")
        if tcfg.checkpoint_every and tr.step % tcfg.checkpoint_every == 0:
            fh.flush()
            path = ckdir / f"step_{tr.step:07d}.ckpt"
            tr.save(path, {"seed": rec.seed})
            last_good = path

    remaining = tcfg.steps - trainer.step
    try:
        trainer.train(max(remaining, 0), callback=on_step)
    except NumericError as exc:
        fh.close()
        where = f"; last good checkpoint {last_good}" if last_good else "; no checkpoint was written"
        raise NumericError(f"{exc}{where}") from exc
    fh.close()
    final = ckdir / "final.ckpt"
    trainer.save(final, {"seed": rec.seed})
    last = trainer.history[-1] if trainer.history else {}
    rec.outputs.update(checkpoint=str(final), loss_log=str(log_path), steps=trainer.step,
                       final_losses={k: float(last[k]) for k in LOSS_COLUMNS[1:] if k in last})
    print(f"trained to step {trainer.step}; checkpoint {final}")


# ---------------------------------------------------------------- sample

def cmd_sample(args, rec: RunRecord) -> None:
    import torch

    from .interpolant import generate, load_model, teacher_features, to_uint8, use_ema
    from .interpolant.config import sampler_config
    from .interpolant.sampling import interpolate_condition
    from .preprocess import RasterImage, write_png

    model, ema, meta = load_model(_existing(args.checkpoint, "checkpoint"))
    base = sampler_config(args.ini)
    overrides = {k: getattr(args, k) for k in ("scheme", "cfg_scale", "diffusion_coeff") if getattr(args, k) is not None}
    if args.guidance_interval:
        lo, hi = _csv(args.guidance_interval, float)
        overrides.update(guidance_low=lo, guidance_high=hi)
    steps_list = _csv(args.steps, int) if args.steps else [base.steps]
    base = replace(base, seed=rec.seed, **overrides)

    cond, cond_ids, labels = None, None, None
    if args.cond:
        emb = load_embeddings(_existing(args.cond, "condition file"))
        if emb.dim != model.cfg.teacher_dim:
            raise UsageError(f"conditions have dim {emb.dim}; the model expects {model.cfg.teacher_dim}")
        cond_all = torch.from_numpy(emb.data.astype(np.float32))
        if args.lambdas:
            if not args.anchors:
                raise UsageError("--lambdas needs --anchors i,j (rows of the condition file)")
            i, j = _csv(args.anchors, int)
            if not (0 <= i < emb.rows and 0 <= j < emb.rows):
                raise UsageError("anchor rows out of range")
            lams = _csv(args.lambdas, float)
            per = args.n or 1
            cond = torch.stack([interpolate_condition(cond_all[i], cond_all[j], lam)
                                for lam in lams for _ in range(per)])
            labels = [f"lambda={lam!r}" for lam in lams for _ in range(per)]
        else:
            n = args.n or emb.rows
            rows = np.arange(n) % emb.rows
            cond = cond_all[rows]
            labels = [f"cond_row={r}" for r in rows]
        cond_ids = labels
    elif args.lambdas:
        raise UsageError("--lambdas needs --cond")
    n = len(cond) if cond is not None else (args.n or 16)
    labels = labels or ["unconditional"] * n
    use = args.ema == "on"
    rec.config.update(sampler=asdict(base), steps=steps_list, n=n, ema=use, checkpoint=str(args.checkpoint),
                      checkpoint_step=meta.get("step"), conditional=cond is not None)
    out = Path(args.output)
    digests = {}
    with use_ema(model, ema, enabled=use):
        for steps in steps_list:
            cfg = replace(base, steps=steps)
            target = out / f"steps_{steps}" if len(steps_list) > 1 else out
            target.mkdir(parents=True, exist_ok=True)
            imgs = generate(model, cfg, n, cond)
            arr = to_uint8(imgs)
            ids = [f"sample-{k:06d}" for k in range(n)]
            for sid, a in zip(ids, arr):
                write_png(RasterImage(a), target / f"{sid}.png")
            write_id_list(ids, target / "ids.txt")
            (target / "samples.tsv").write_text(
                "sample_id\tsource\n" + "".join(f"{s}\t{lab}\n" for s, lab in zip(ids, labels)), encoding="utf-8")
            if cond is not None:
                save_embeddings(EmbeddingSet(cond.numpy().astype(np.float64), "toy-teacher", "conditions"),
                                target / "conditions.emb")
            feats = teacher_features(model, imgs, f"generated-{steps}")
            save_embeddings(feats, target / "features.emb")
            digests[str(steps)] = hashlib.sha256(arr.tobytes()).hexdigest()
    rec.outputs.update(sample_digest=digests, n=n)
    print(f"wrote {n} samples for steps {steps_list} to {out}")


# ---------------------------------------------------------------- gen-data

def cmd_gen_data(args, rec: RunRecord) -> None:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    kind = args.kind
    rec.config.update(kind=kind)
    if kind == "toy":
        from .interpolant import generate_toy_dataset, save_toy_dataset

        data = generate_toy_dataset(args.n or 25000, seed=rec.seed)
        save_toy_dataset(data, out)
        _toy_features(data, out)
        rec.config.update(n=len(data))
        rec.outputs.update(dataset=str(out), groups=data.manifest.groups())
    elif kind == "gaussian":
        # N(0, 1) against N(1, 4) per coordinate: FD = dim * (1 + 1 + 4 - 2*1*2) = 2 * dim
        n = args.n or 20000
        rng = np.random.Generator(np.random.Philox(key=[rec.seed & (2**64 - 1), 0x6A55]))
        a = rng.standard_normal((n, args.dim))
        b = 1.0 + 2.0 * rng.standard_normal((n, args.dim))
        save_embeddings(EmbeddingSet(a, "gaussian", "reference"), out / "reference.emb")
        save_embeddings(EmbeddingSet(b, "gaussian", "candidate"), out / "candidate.emb")
        write_id_list([f"g-{i:06d}" for i in range(n)], out / "ids.txt")
        rec.config.update(n=n, dim=args.dim)
        rec.outputs.update(expected_fd=2.0 * args.dim)
    elif kind == "slide":
        _gen_slides(args, rec, out)
    else:
        raise UsageError(f"unknown dataset kind {kind!r}")
    print(f"wrote {kind} data to {out}")


def _toy_features(data, out: Path) -> None:
    """Teacher features per split: references for eval, conditions for sample."""
    import torch

    from .interpolant import TeacherExtractor
    from .interpolant.models import ModelConfig

    teacher = TeacherExtractor(ModelConfig())
    for split in ("train", "val_out"):
        idx = data.indices(split)
        if len(idx) == 0:
            continue
        with torch.no_grad():
            feats = [teacher(torch.from_numpy(data.as_float(idx[lo:lo + 4096])))[0]
                     for lo in range(0, len(idx), 4096)]
        arr = torch.cat(feats).numpy().astype(np.float64)
        save_embeddings(EmbeddingSet(arr, "toy-teacher", split), out / f"{split}.emb")
        write_id_list([data.manifest.entries[i].tile_id for i in idx], out / f"{split}_ids.txt")


def _gen_slides(args, rec: RunRecord, out: Path) -> None:
    from .preprocess import RasterImage, procedural_slide, read_region, write_png

    tile, margin = args.tile_size, 16
    per_side = max(1, (args.slide_size - 2 * margin) // tile)
    count = args.n or 12
    splits = ("guidance", "val_in", "val_out")
    (out / "slides").mkdir(exist_ok=True)
    (out / "tiles").mkdir(exist_ok=True)
    recs, slides = [], {}
    for i in range(count):
        s = i // (per_side * per_side)
        if s not in slides:
            slides[s] = procedural_slide(args.slide_size, args.slide_size, seed=rec.seed * 1000 + s)
            write_png(RasterImage(slides[s]), out / "slides" / f"slide-{s:03d}.png")
        k = i % (per_side * per_side)
        x, y = margin + (k % per_side) * tile, margin + (k // per_side) * tile
        r = TileRecord(f"tile-{i:06d}", f"slide-{s:03d}", f"G{s % 3}", x, y, tile, tile, 0.5, splits[i % 3])
        write_png(read_region(slides[s], r), out / "tiles" / f"{r.tile_id}.png")
        recs.append(r)
    save_manifest(TileManifest(tuple(recs)), out / "manifest.tsv")
    rec.config.update(n=count, tile_size=tile, slide_size=args.slide_size)
    rec.outputs.update(manifest=str(out / "manifest.tsv"), slides=len(slides))


# ---------------------------------------------------------------- parser / main

COMMANDS = {
    "eval": cmd_eval,
    "bootstrap": cmd_bootstrap,
    "pipeline": cmd_pipeline,
    "train": cmd_train,
    "sample": cmd_sample,
    "gen-data": cmd_gen_data,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="diffbench", description="Generative-model benchmarking for image tiles.")
    p.add_argument("--version", action="version", version=f"diffbench {__version__}")
    p.add_argument("--config", help="INI file with per-module sections")
    p.add_argument("--seed", type=int, help="top-level seed (default: [run] seed or 0)")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: logical cores)")
    p.add_argument("--output", help="output directory (default: [run] output or ./diffbench-out)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def metric_args(sp):
        sp.add_argument("--reference", required=True, help="reference embedding file")
        sp.add_argument("--candidate", required=True, help="candidate embedding file")
        sp.add_argument("--metrics", help="comma list of fd, precision, recall, pr, fld, cosine_sim")
        sp.add_argument("--k", type=int, help=f"k for precision/recall (default {DEFAULT_K})")
        sp.add_argument("--extractor", help="require this extractor id on every input")

    e = sub.add_parser("eval", help="compute metrics between two embedding files")
    metric_args(e)
    e.add_argument("--reference-ids")
    e.add_argument("--candidate-ids")
    e.add_argument("--fld-fit", help="embedding file used to fit FLD variances (default: half the reference)")

    b = sub.add_parser("bootstrap", help="subsample bootstrap of metrics over a candidate pool")
    metric_args(b)
    b.add_argument("--subsample", type=int, help=f"rows per replicate (default {DEFAULT_SUBSAMPLE})")
    b.add_argument("--replicates", type=int, help=f"number of replicates (default {DEFAULT_REPLICATES})")

    pp = sub.add_parser("pipeline", help="apply the preprocessing chains to a tile set")
    pp.add_argument("--manifest", required=True)
    pp.add_argument("--tiles", required=True, help="directory of {tile_id}.png")
    pp.add_argument("--slides", help="directory of {slide_id}.png, needed by expand")
    pp.add_argument("--preset")
    pp.add_argument("--guidance", help="op chain for the guidance arm, e.g. expand:16,jpeg:70")
    pp.add_argument("--validation", help="op chain for the validation arm")

    t = sub.add_parser("train", help="train the toy latent interpolant")
    src = t.add_mutually_exclusive_group()
    src.add_argument("--data", help="toy dataset directory from gen-data toy")
    src.add_argument("--toy", type=int, default=25000, help="generate a toy dataset of this size")
    t.add_argument("--resume")
    for name, typ in (("steps", int), ("batch-size", int), ("lr", float), ("ema-decay", float),
                      ("cond-drop", float), ("align-weight", float), ("checkpoint-every", int),
                      ("overfit-batch", int)):
        t.add_argument(f"--{name}", type=typ)

    s = sub.add_parser("sample", help="generate images from a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--n", type=int)
    s.add_argument("--steps", help="step count, or a comma list for a sweep")
    s.add_argument("--scheme", choices=("ode", "sde"))
    s.add_argument("--cfg-scale", type=float)
    s.add_argument("--guidance-interval", help="lo,hi")
    s.add_argument("--diffusion-coeff", choices=("zero", "t", "t(1-t)"))
    s.add_argument("--ema", choices=("on", "off"), default="on")
    s.add_argument("--cond", help="embedding file of conditions")
    s.add_argument("--lambdas", help="interpolation factors, e.g. 0,0.25,0.5,0.75,1")
    s.add_argument("--anchors", help="i,j rows of the condition file to interpolate between")

    g = sub.add_parser("gen-data", help="write synthetic datasets")
    g.add_argument("kind", choices=("toy", "gaussian", "slide"))
    g.add_argument("--n", type=int)
    g.add_argument("--dim", type=int, default=1)
    g.add_argument("--tile-size", type=int, default=224)
    g.add_argument("--slide-size", type=int, default=1024)
    return p


def _error_record(exc: BaseException, command: str | None) -> dict:
    code = exc.exit_code if isinstance(exc, DiffbenchError) else 4
    return {"error": type(exc).__name__, "message": str(exc), "exit_code": code, "command": command}


def main(argv: list[str] | None = None) -> int:
    from .interpolant.config import read_config

    argv = list(sys.argv[1:] if argv is None else argv)
    command, out_dir = None, None
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.ini = read_config(args.config) if args.config else {}
        run = args.ini.get("run", {})
        seed = args.seed if args.seed is not None else int(run.get("seed", 0))
        args.threads = args.threads or int(run.get("threads", os.cpu_count() or 1))
        args.output = args.output or run.get("output", "diffbench-out")
        out_dir = Path(args.output)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise UsageError(f"cannot create output directory {out_dir}: {exc}") from None
        _set_threads(args.threads)
        rec = RunRecord(command, argv, {"config_file": args.config, "threads": args.threads}, seed)
        with warnings_into(rec):
            COMMANDS[command](args, rec)
        rec.finished = time.time()
        if rec.reports:
            (out_dir / "reports.txt").write_text(format_reports(rec.reports), encoding="utf-8")
            print(summary_table(rec.reports))
        for w in rec.warnings:
            print(f"warning: {w}", file=sys.stderr)
        (out_dir / "run.json").write_text(rec.to_json(), encoding="utf-8")
        return EXIT_OK
    except (DiffbenchError, ArithmeticError, FloatingPointError) as exc:
        err = _error_record(exc, command)
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        if out_dir is not None and out_dir.is_dir():
            (out_dir / "error.json").write_text(json.dumps(err, indent=2, sort_keys=True), encoding="utf-8")
        return err["exit_code"]


class warnings_into:
    """Collect Python warnings raised during a command into the RunRecord."""

    def __init__(self, rec: RunRecord):
        self.rec = rec

    def __enter__(self):
        import warnings

        self._ctx = warnings.catch_warnings(record=True)
        self._caught = self._ctx.__enter__()
        warnings.simplefilter("always")
        return self

    def __exit__(self, *exc):
        self.rec.warnings.extend(str(w.message) for w in self._caught)
        return self._ctx.__exit__(*exc)


if __name__ == "__main__":
    sys.exit(main())
