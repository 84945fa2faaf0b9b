"""Acceptance suite: one verdict line per criterion, printed at the end of the run.

Criteria 12 and 13 train the toy rig for 10k steps and sample 5k images
several times; expect about half an hour on a single core.
"""

import io
import os
import time

import numpy as np
import pytest
import scipy.linalg
import torch
from PIL import Image

from diffbench.datastore import EmbeddingSet
from diffbench.interpolant import (
    ModelConfig,
    SamplerConfig,
    StepDraws,
    TrainConfig,
    Trainer,
    build_model,
    cfg_velocity,
    compute_losses,
    ema_update,
    EmaShadow,
    gaussian_velocity,
    generate,
    generate_toy_dataset,
    live_parameters,
    sample_ode,
    sample_sde,
    teacher_features,
    use_ema,
)
from diffbench.interpolant.training import routed_total
from diffbench.metrics import (
    BootstrapSpec,
    GaussianSummary,
    bootstrap,
    fd_between,
    fit_gaussian,
    fld,
    frechet_distance,
    precision_recall,
    sqrtm_psd,
)
from diffbench.preprocess import (
    JpegConfig,
    RasterImage,
    TokenGrid,
    bicubic_resize,
    center_crop,
    expand_tile_coords,
    jpeg_quant_tables,
    jpeg_roundtrip,
    procedural_slide,
    psnr,
    read_region,
    weight_matrix,
)
from diffbench.datastore import TileRecord
from diffbench.preprocess.jpeg import BASE_CHROMA, BASE_LUMA


# ---------------------------------------------------------------- oracles

def closed_form_fd(mu1, s1, mu2, s2):
    # independent route: scipy's Schur-based sqrtm of the product
    covmean = scipy.linalg.sqrtm(s1 @ s2).real
    return float(np.sum((mu1 - mu2) ** 2) + np.trace(s1 + s2 - 2 * covmean))


def brute_pr(real, gen, k):
    def dist(a, b):
        return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))

    def radii(x):
        return np.sort(dist(x, x), axis=1)[:, k]

    r_real, r_gen = radii(real), radii(gen)
    precision = np.mean([(dist(g[None], real)[0] <= r_real).any() for g in gen])
    recall = np.mean([(dist(r[None], gen)[0] <= r_gen).any() for r in real])
    return float(precision), float(recall)


# ---------------------------------------------------------------- 1-6 metrics

def test_c01_gaussian_fd_oracle(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    a = rng.standard_normal((8, 8))
    b = rng.standard_normal((8, 8))
    s1, s2 = a @ a.T / 8 + 0.5 * np.eye(8), b @ b.T / 8 + 0.5 * np.eye(8)
    mu1, mu2 = np.zeros(8), rng.normal(0, 1, 8)
    expected = closed_form_fd(mu1, s1, mu2, s2)
    x = rng.multivariate_normal(mu1, s1, 20000)
    y = rng.multivariate_normal(mu2, s2, 20000)
    estimate = fd_between(EmbeddingSet(x, "g"), EmbeddingSet(y, "g"))
    rel = abs(estimate - expected) / expected
    one_d = frechet_distance(GaussianSummary(np.array([0.0]), np.array([[1.0]]), 2),
                             GaussianSummary(np.array([1.0]), np.array([[4.0]]), 2))
    elapsed = time.perf_counter() - start
    ok = rel <= 0.05 and round(one_d, 3) == 2.0 and elapsed < 10
    verdict(1, ok, f"8-D FD {estimate:.4f} vs closed form {expected:.4f} (rel {rel:.4f} <= 0.05); "
                   f"1-D fixture {one_d:.6f} == 2.000; {elapsed:.1f}s < 10s")
    assert ok


def test_c02_fd_identity_symmetry(verdict):
    rng = np.random.default_rng(2)
    a = EmbeddingSet(rng.standard_normal((1000, 64)), "r")
    b = EmbeddingSet(rng.standard_normal((1000, 64)) * 1.3 + 0.2, "r")
    ident = fd_between(a, a)
    asym = abs(fd_between(a, b) - fd_between(b, a))
    ok = ident <= 1e-8 and asym <= 1e-8
    verdict(2, ok, f"FD(X,X) = {ident:.2e} <= 1e-8; |FD(A,B) - FD(B,A)| = {asym:.2e} <= 1e-8")
    assert ok


def test_c03_sqrtm_residual(verdict):
    rng = np.random.default_rng(3)
    worst = 0.0
    for i in range(100):
        d = int(rng.integers(1, 65))
        m = rng.standard_normal((d, d + int(rng.integers(0, 8))))
        a = m @ m.T
        r = sqrtm_psd(a)
        worst = max(worst, np.linalg.norm(r @ r - a) / np.linalg.norm(a))
    ok = worst <= 1e-8
    verdict(3, ok, f"worst relative residual over 100 PSD matrices (D <= 64) = {worst:.2e} <= 1e-8")
    assert ok


def test_c04_precision_recall_brute_force(verdict):
    rng = np.random.default_rng(4)
    mismatches = 0
    for i in range(200):
        n_r, n_g = int(rng.integers(10, 500)), int(rng.integers(10, 500))
        d, k = int(rng.integers(1, 9)), int(rng.choice([1, 3, 5]))
        real = rng.standard_normal((n_r, d))
        gen = rng.standard_normal((n_g, d)) * rng.uniform(0.5, 1.5) + rng.uniform(-1, 1)
        if precision_recall(real, gen, k) != brute_pr(real, gen, k):
            mismatches += 1
    same = rng.standard_normal((300, 4))
    ident = precision_recall(same, same.copy(), 3)
    far = precision_recall(same, same + 1e3, 3)
    ok = mismatches == 0 and ident == (1.0, 1.0) and far == (0.0, 0.0)
    verdict(4, ok, f"{200 - mismatches}/200 instances equal brute force; identical {ident}; far {far}")
    assert ok


def test_c05_fld_ordering(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    fit, test, fresh = (rng.standard_normal((1000, 8)) for _ in range(3))
    v_fresh = fld(fresh, fit, test)
    v_shift = fld(fresh + 3.0, fit, test)
    v_copy = fld(fit.copy(), fit, test)
    elapsed = time.perf_counter() - start
    ok = -0.5 <= v_fresh <= 0.5 and v_shift > v_fresh and v_copy > v_fresh and elapsed < 60
    verdict(5, ok, f"fresh {v_fresh:.3f} in [-0.5, 0.5]; shift {v_shift:.3f} > fresh; "
                   f"copies {v_copy:.3f} > fresh; {elapsed:.1f}s < 60s")
    assert ok


def test_c06_bootstrap_protocol(verdict):
    spec = BootstrapSpec()
    rng = np.random.default_rng(6)
    ref = EmbeddingSet(rng.standard_normal((3000, 6)), "x")
    pool = EmbeddingSet(rng.standard_normal((4000, 6)) + 0.1, "x")
    small = BootstrapSpec(subsample_size=1500, replicates=12, seed=9)
    runs = [bootstrap(lambda c: fd_between(ref, c), pool, small, threads=t)[2] for t in (1, 4, 16)]
    same = all(np.array_equal(runs[0], r) for r in runs[1:])
    _, std, _ = bootstrap(lambda c: fd_between(ref, c), pool, BootstrapSpec(4000, 3, 0))
    ok = (spec.subsample_size, spec.replicates) == (50_000, 50) and same and std == 0.0
    verdict(6, ok, f"defaults ({spec.subsample_size}, {spec.replicates}); replicates bit-identical "
                   f"across 1/4/16 threads: {same}; subsample=pool std = {std}")
    assert ok


# ---------------------------------------------------------------- 7-9 preprocessing

def test_c07_preprocessing_inversion(verdict):
    rng = np.random.default_rng(7)
    slides = [procedural_slide(1024, 768, seed=s) for s in range(4)]
    bad = 0
    for i in range(1000):
        s = int(rng.integers(4))
        h, w = slides[s].shape[:2]
        rec = TileRecord(f"t{i}", f"s{s}", "G", int(rng.integers(16, w - 240 + 1)),
                         int(rng.integers(16, h - 240 + 1)), 224, 224, 0.5, "val_out")
        rendered = read_region(slides[s], expand_tile_coords(rec, 16, (w, h)))
        if center_crop(rendered, (224, 224)).data.tobytes() != read_region(slides[s], rec).data.tobytes():
            bad += 1
    ok = bad == 0
    verdict(7, ok, f"{1000 - bad}/1000 tiles byte-identical after expand(16) -> render -> crop(224)")
    assert ok


def test_c08_resampler(verdict):
    worst = 0.0
    for n_in, n_out in [(16, 14), (256, 224), (224, 256), (7, 3), (5, 11), (64, 20)]:
        worst = max(worst, np.abs(weight_matrix(n_in, n_out).sum(axis=1) - 1).max())
    const = RasterImage(np.full((256, 256, 3), 137, np.uint8))
    const_ok = all((bicubic_resize(const, s).data == 137).all() for s in ((224, 224), (300, 180)))
    ramp = np.arange(16, dtype=np.float64)
    grid = TokenGrid(np.broadcast_to(ramp[:, None, None], (16, 16, 3)).copy())
    ideal = (np.arange(14) + 0.5) * 16 / 14 - 0.5
    ramp_err = np.abs(bicubic_resize(grid, 14).data - ideal[:, None, None]).max()
    ok = worst <= 1e-9 and const_ok and ramp_err <= 1e-3
    verdict(8, ok, f"row-sum error {worst:.1e} <= 1e-9; constant preserved {const_ok}; "
                   f"16->14 ramp error {ramp_err:.2e} <= 1e-3")
    assert ok


def test_c09_jpeg(verdict):
    luma50, chroma50 = jpeg_quant_tables(50)
    verbatim = np.array_equal(luma50, BASE_LUMA) and np.array_equal(chroma50, BASE_CHROMA)
    q70 = int(jpeg_quant_tables(70)[0][0, 0])
    img = RasterImage(procedural_slide(256, 256, seed=4))
    gaps = {}
    for q in (70, 90):
        buf = io.BytesIO()
        Image.fromarray(img.data).save(buf, "JPEG", quality=q, subsampling=2)
        ref = RasterImage(np.asarray(Image.open(io.BytesIO(buf.getvalue())).convert("RGB")))
        gaps[q] = psnr(img, jpeg_roundtrip(img, JpegConfig(q))) - psnr(img, ref)
    ok = verbatim and q70 == 10 and all(abs(g) <= 1.0 for g in gaps.values())
    verdict(9, ok, f"q50 tables verbatim {verbatim}; q70 luma[0,0] = {q70}; PSNR gap vs Pillow "
                   f"q70 {gaps[70]:+.2f} dB, q90 {gaps[90]:+.2f} dB (within 1 dB)")
    assert ok


# ---------------------------------------------------------------- 10-11 interpolant numerics

def test_c10_sampler_marginals(verdict):
    start = time.perf_counter()
    worst_mean, var_lo, var_hi = 0.0, np.inf, -np.inf
    runs = [("ode", "t")] + [("sde", w) for w in ("zero", "t", "t(1-t)")]
    for scheme, w in runs:
        cfg = SamplerConfig(scheme=scheme, steps=250, diffusion_coeff=w, seed=10)
        x = (sample_ode if scheme == "ode" else sample_sde)(gaussian_velocity, cfg, 10000, (4,), torch.float64)
        worst_mean = max(worst_mean, float(x.mean(0).abs().max()))
        var_lo, var_hi = min(var_lo, float(x.var(0).min())), max(var_hi, float(x.var(0).max()))
    ode = sample_ode(gaussian_velocity, SamplerConfig(scheme="ode", steps=250, seed=3), 1000, (4,))
    sde = sample_sde(gaussian_velocity, SamplerConfig(scheme="sde", steps=250, seed=3, diffusion_coeff="zero"),
                     1000, (4,))
    identical = torch.equal(ode, sde)
    elapsed = time.perf_counter() - start
    ok = worst_mean <= 0.05 and 0.9 <= var_lo and var_hi <= 1.1 and identical and elapsed < 60
    verdict(10, ok, f"max |mean| {worst_mean:.4f} <= 0.05; variance in [{var_lo:.3f}, {var_hi:.3f}] "
                    f"within [0.9, 1.1]; SDE(w=0) == ODE {identical}; {elapsed:.1f}s < 60s")
    assert ok


TINY = ModelConfig(image_size=16, latent_channels=2, vae_channels=(4, 4), teacher_patch=4, teacher_dim=4,
                   teacher_hidden=8, hidden=8, heads=2, depth=1, mlp_ratio=2, align_depth=1,
                   projector_hidden=8, time_freqs=8)


def _gradient_errors():
    model = build_model(TINY, seed=0).double()
    g = torch.Generator().manual_seed(1)
    with torch.no_grad():
        for p in live_parameters(model).values():
            p.add_(0.3 * torch.randn(p.shape, generator=g, dtype=p.dtype))
    images = torch.rand(3, 3, 16, 16, generator=g, dtype=torch.float64) * 2 - 1
    cond, _ = model.teacher(images)
    tokens = model.teacher.align_targets(images, TINY.latent_side).double()
    side = TINY.latent_side
    draws = StepDraws.draw(0, 0, 3, (TINY.latent_channels, side, side), 0.3, dtype=torch.float64)
    terms = {
        "diffusion": (("diffusion",), "diffusion", ("denoiser",)),
        "alignment": (("align_denoiser", "align_vae"), "align_denoiser", ("vae", "denoiser")),
        "reconstruction": (("reconstruction",), "reconstruction", ("vae",)),
        "kl": (("kl",), "kl", ("vae",)),
    }
    errors = {}
    for name, (pieces, value_key, nets) in terms.items():
        params = {k: p for k, p in live_parameters(model).items() if k.split(".")[0] in nets}
        model.zero_grad()
        losses = compute_losses(model, images, cond, tokens, draws)
        sum(losses[k] for k in pieces).backward()
        analytic = torch.cat([torch.zeros(p.numel(), dtype=p.dtype) if p.grad is None else p.grad.reshape(-1)
                              for p in params.values()])
        numeric = []
        h = 1e-6
        with torch.no_grad():
            for p in params.values():
                flat = p.view(-1)
                for i in range(flat.numel()):
                    old = float(flat[i])
                    flat[i] = old + h
                    up = float(compute_losses(model, images, cond, tokens, draws)[value_key])
                    flat[i] = old - h
                    down = float(compute_losses(model, images, cond, tokens, draws)[value_key])
                    flat[i] = old
                    numeric.append((up - down) / (2 * h))
        numeric = torch.tensor(numeric, dtype=torch.float64)
        errors[name] = float((analytic - numeric).norm() / numeric.norm())
    return model.parameter_count(), errors


def _routing_zero():
    model = build_model(TINY, seed=2).double()
    images = torch.rand(3, 3, 16, 16, dtype=torch.float64, generator=torch.Generator().manual_seed(2)) * 2 - 1
    cond, _ = model.teacher(images)
    tokens = model.teacher.align_targets(images, TINY.latent_side).double()
    side = TINY.latent_side
    draws = StepDraws.draw(2, 0, 3, (TINY.latent_channels, side, side), 0.0, dtype=torch.float64)
    losses = compute_losses(model, images, cond, tokens, draws)
    zeroed = {k: (v if k == "diffusion" else 0 * v) for k, v in losses.items()}
    routed_total(zeroed, 0.0, 0.0).backward()
    vae_zero = all(p.grad is None or not p.grad.any() for p in model.vae.parameters())
    den_live = any(p.grad is not None and p.grad.any() for p in model.denoiser.parameters())
    return vae_zero and den_live


def test_c11_training_numerics(verdict):
    count, errors = _gradient_errors()
    routing = _routing_zero()

    data = generate_toy_dataset(600, seed=5)
    tr = Trainer.create(ModelConfig(), TrainConfig(batch_size=8, lr=1e-3, overfit_batch=8, ema_decay=0.999), data)
    hist = tr.train(200)
    ratio = hist[-1]["total"] / hist[0]["total"]

    cfg = SamplerConfig(cfg_scale=1.0)
    vc, vu = torch.randn(50), torch.randn(50)
    cfg_identity = all(torch.equal(cfg_velocity(vc, vu, float(t), cfg), vc) for t in np.linspace(0, 1, 101))

    model = build_model(TINY).double()
    shadow = EmaShadow(model, 0.99)
    start = {k: v.clone() for k, v in shadow.params.items()}
    target = {k: torch.full_like(v, 0.25) for k, v in shadow.params.items()}
    for _ in range(1000):
        ema_update(shadow, target)
    decay = 0.99 ** 1000
    ema_err = max(float((v - (start[k] * decay + 0.25 * (1 - decay))).abs().max()) for k, v in shadow.params.items())

    worst = max(errors.values())
    ok = count <= 5000 and worst <= 1e-4 and routing and ratio < 0.5 and cfg_identity and ema_err <= 1e-12
    verdict(11, ok, f"{count} params; FD-gradient rel error max {worst:.1e} <= 1e-4 "
                    f"({', '.join(f'{k} {v:.1e}' for k, v in errors.items())}); routing zero {routing}; "
                    f"overfit loss ratio {ratio:.3f} < 0.5; CFG scale-1 exact {cfg_identity}; "
                    f"EMA closed-form error {ema_err:.1e}")
    assert ok


# ---------------------------------------------------------------- 12-13 end-to-end toy rig

N_EVAL = 5000
TOY_TRAIN = TrainConfig(steps=10000, batch_size=64, lr=1e-3, ema_decay=0.999, seed=0)


@pytest.fixture(scope="module")
def toy_rig():
    torch.set_num_threads(os.cpu_count() or 1)
    data = generate_toy_dataset(25000, seed=0)
    tr = Trainer.create(ModelConfig(), TOY_TRAIN, data)
    model = tr.model
    ref_idx = data.indices("val_out")[:N_EVAL]
    reference = teacher_features(model, torch.from_numpy(data.as_float(ref_idx)), "val_out")
    pick = np.random.Generator(np.random.Philox(key=[0, 0xC0])).choice(data.indices("train"), N_EVAL, replace=False)
    cond = tr.targets.pooled[pick]

    def fd_of(steps, conditional):
        cfg = SamplerConfig(scheme="sde", steps=steps, seed=1)
        imgs = generate(model, cfg, N_EVAL, cond if conditional else None)
        return fd_between(teacher_features(model, imgs, f"gen-{steps}"), reference)

    results = {"init": fd_of(250, False)}
    start = time.perf_counter()
    tr.train(TOY_TRAIN.steps)
    results["train_seconds"] = time.perf_counter() - start
    with use_ema(model, tr.ema):
        for steps in (20, 50, 250):
            results[("cond", steps)] = fd_of(steps, True)
        results[("uncond", 250)] = fd_of(250, False)
    return results


@pytest.mark.slow
def test_c12_toy_benchmark(verdict, toy_rig):
    init, cond, uncond = toy_rig["init"], toy_rig[("cond", 250)], toy_rig[("uncond", 250)]
    finite = all(np.isfinite(v) for v in (init, cond, uncond))
    factor = init / cond if cond > 0 else np.inf
    ok = finite and factor >= 5 and cond < uncond
    verdict(12, ok, f"FD at init {init:.4f}; trained conditional {cond:.4f} ({factor:.0f}x lower, need >= 5x); "
                    f"unconditional {uncond:.4f} > conditional; training {toy_rig['train_seconds']:.0f}s "
                    f"on {torch.get_num_threads()} thread(s)")
    assert ok


@pytest.mark.slow
def test_c13_step_sweep(verdict, toy_rig):
    f20, f50, f250 = (toy_rig[("cond", s)] for s in (20, 50, 250))
    non_increasing = f20 >= f50 >= f250
    largest_first = (f20 - f50) > (f50 - f250)
    ok = non_increasing and largest_first
    verdict(13, ok, f"FD at 20/50/250 steps = {f20:.5f} / {f50:.5f} / {f250:.5f}; non-increasing "
                    f"{non_increasing}; drop 20->50 {f20 - f50:.5f} > drop 50->250 {f50 - f250:.5f}")
    assert ok
