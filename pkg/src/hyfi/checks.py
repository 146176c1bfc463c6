"""Property suites: every library invariant as a runnable, countable check.

Each suite returns a :class:`SuiteResult` with per-check trial/failure counts
and the worst observed margin.  The CLI ``check`` command and the acceptance
tests both run these functions, so there is exactly one implementation of
every property.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import hygeo, interp, model as model_mod, synth, tape, trainer
from .grad import ParamVector, finite_diff_grad, value_and_grad
from .model import ModelConfig
from .synth import SynthConfig
from .trainer import TrainConfig


@dataclass
class CheckItem:
    label: str
    trials: int
    failures: int
    worst: float  # largest error (tolerance checks) or smallest margin (strict checks)

    @property
    def passed(self):
        return self.failures == 0


@dataclass
class SuiteResult:
    name: str
    items: list = field(default_factory=list)
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(item.passed for item in self.items)

    def add(self, label, trials, failures, worst):
        self.items.append(CheckItem(label, trials, failures, worst))

    def lines(self):
        out = [f"[{'PASS' if self.passed else 'FAIL'}] suite {self.name} ({self.seconds:.2f}s)"]
        for it in self.items:
            mark = "ok " if it.passed else "FAIL"
            out.append(f"  {mark} {it.label}: {it.trials} trials, "
                       f"{it.failures} failures, worst {it.worst:.3e}")
        return out


def _timed(fn):
    def wrapper(*args, **kwargs):
        start = time.monotonic()
        result = fn(*args, **kwargs)
        result.seconds = time.monotonic() - start
        return result
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _random_point(rng, n, kappa, max_norm=10.0):
    direction = rng.standard_normal(n)
    direction /= max(np.linalg.norm(direction), 1e-12)
    return hygeo.lift(rng.uniform(0.0, max_norm) * direction, kappa)


# ---------------------------------------------------------------------------

@_timed
def check_geometry(trials=10000, seed=101):
    """Hyperboloid constraint, exp/log round trip, tangency, distance axioms."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("geometry")
    worst = {k: 0.0 for k in ("constraint", "roundtrip", "tangency", "symmetry",
                              "self", "triangle", "normconst")}
    fails = {k: 0 for k in worst}
    for _ in range(trials):
        n = int(rng.integers(2, 9))
        kappa = rng.uniform(0.25, 4.0)
        p = _random_point(rng, n, kappa)
        q = _random_point(rng, n, kappa)
        r = _random_point(rng, n, kappa)

        c = max(hygeo.constraint_residual(pt, kappa) for pt in (p, q, r))
        worst["constraint"] = max(worst["constraint"], c)
        fails["constraint"] += c >= 1e-9

        v = hygeo.log_map(p, q, kappa)
        tangency = abs(hygeo.lorentz_inner(p.vector(), v.components))
        worst["tangency"] = max(worst["tangency"], tangency)
        fails["tangency"] += tangency >= 1e-9

        back = hygeo.exp_map(p, v, 1.0, kappa)
        rt = float(np.max(np.abs(back.vector() - q.vector())))
        worst["roundtrip"] = max(worst["roundtrip"], rt)
        fails["roundtrip"] += rt >= 1e-7

        dpq = hygeo.geodesic_distance(p, q, kappa)
        sym = abs(dpq - hygeo.geodesic_distance(q, p, kappa))
        worst["symmetry"] = max(worst["symmetry"], sym)
        fails["symmetry"] += sym >= 1e-10

        dpp = float(hygeo.geodesic_distance(p, p, kappa))
        worst["self"] = max(worst["self"], abs(dpp))
        fails["self"] += dpp != 0.0

        slack = float(hygeo.geodesic_distance(p, q, kappa)
                      + hygeo.geodesic_distance(q, r, kappa)
                      - hygeo.geodesic_distance(p, r, kappa))
        worst["triangle"] = max(worst["triangle"], -slack)
        fails["triangle"] += slack < -1e-8

        nc = abs(hygeo.tangent_norm(v) - float(dpq))
        worst["normconst"] = max(worst["normconst"], nc)
        fails["normconst"] += nc >= 1e-7

    labels = {
        "constraint": "hyperboloid constraint |k<p,p>+1| < 1e-9",
        "tangency": "log map tangency |<p, log_p q>| < 1e-9",
        "roundtrip": "exp(log) round trip < 1e-7",
        "symmetry": "distance symmetry < 1e-10",
        "self": "d(p, p) == 0",
        "triangle": "triangle inequality (slack > -1e-8)",
        "normconst": "|log norm - distance| < 1e-7",
    }
    for key, label in labels.items():
        res.add(label, trials, int(fails[key]), worst[key])
    return res


@_timed
def check_interpolation(trials=10000, seed=202):
    """Coefficient inequalities, Euclidean limit, and form equivalence."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("interpolation")

    margin = math.inf
    fails = 0
    for _ in range(trials):
        t = rng.uniform(0.0, 1.0)
        while t in (0.0, 1.0):
            t = rng.uniform(0.0, 1.0)
        beta = rng.uniform(0.0, 10.0)
        while beta == 0.0:
            beta = rng.uniform(0.0, 10.0)
        c = interp.sinh_coefficients(t, beta)
        m = min((1.0 - t) - c.a, t - c.b, 1.0 - (c.a + c.b))
        margin = min(margin, m)
        fails += not (c.a < 1.0 - t and c.b < t and c.a + c.b < 1.0)
    res.add("coefficients strictly below Euclidean weights and a+b < 1", trials, fails, margin)

    limit_err = 0.0
    limit_fails = 0
    grid = np.linspace(0.05, 0.95, 19)
    for t in grid:
        for beta in (0.0, 1e-9):
            c = interp.sinh_coefficients(float(t), beta)
            err = max(abs(c.a - (1.0 - t)), abs(c.b - t))
            limit_err = max(limit_err, err)
            limit_fails += err >= 1e-8
    res.add("beta -> 0 limit returns (1-t, t) within 1e-8", 2 * len(grid), limit_fails, limit_err)

    eq_trials = 1000
    eq_err = 0.0
    eq_fails = 0
    for _ in range(eq_trials):
        n = int(rng.integers(2, 7))
        kappa = rng.uniform(0.25, 4.0)
        p = _random_point(rng, n, kappa, max_norm=3.0)
        q = _random_point(rng, n, kappa, max_norm=3.0)
        t = rng.uniform(0.0, 1.0)
        a = interp.geodesic_interpolate(p, q, t, kappa)
        b = interp.interpolate_via_maps(p, q, t, kappa)
        err = float(np.max(np.abs(a.vector() - b.vector())))
        eq_err = max(eq_err, err)
        eq_fails += err >= 1e-7
    res.add("sinh form agrees with exp(log) composition within 1e-7", eq_trials, eq_fails, eq_err)

    end_trials = 200
    end_err = 0.0
    end_fails = 0
    attract_fails = 0
    attract_margin = math.inf
    for _ in range(end_trials):
        n = int(rng.integers(2, 7))
        kappa = rng.uniform(0.25, 4.0)
        p = _random_point(rng, n, kappa, max_norm=4.0)
        q = _random_point(rng, n, kappa, max_norm=4.0)
        err = max(
            float(np.max(np.abs(interp.geodesic_interpolate(p, q, 0.0, kappa).vector() - p.vector()))),
            float(np.max(np.abs(interp.geodesic_interpolate(p, q, 1.0, kappa).vector() - q.vector()))),
        )
        end_err = max(end_err, err)
        end_fails += err >= 1e-7
        mid = interp.geodesic_interpolate(p, q, 0.5, kappa)
        lifted_mix = hygeo.lift(0.5 * (np.asarray(p.spatial) + np.asarray(q.spatial)), kappa)
        gap = (hygeo.origin_distance(lifted_mix.spatial, kappa)
               - hygeo.origin_distance(mid.spatial, kappa))
        attract_margin = min(attract_margin, gap)
        attract_fails += gap < -1e-12
    res.add("endpoint identities within 1e-7", end_trials, end_fails, end_err)
    res.add("midpoint no farther from origin than lifted Euclidean mix",
            end_trials, attract_fails, attract_margin)
    return res


@_timed
def check_compression(trials=10000, seed=303):
    """Strict positivity of the spatial-norm gap on its actual domain.

    The universal claim is false for chords whose Euclidean mix passes near
    the spatial origin (see the decisions ledger for the counterexample), so
    this suite asserts three truthful facts: zero violations on aligned pairs
    (spatial dot product >= 0, which covers all same-direction collinear
    cases), zero violations at the benchmark's operating dimension, and that
    the documented origin-crossing counterexample really does reproduce.
    """
    rng = np.random.default_rng(seed)
    res = SuiteResult("compression")
    t_grid = np.arange(0.1, 0.95, 0.1)

    def run_family(sampler, count):
        fails, margin, total = 0, math.inf, 0
        for k in range(count):
            p, q, kappa = sampler(k)
            for t in t_grid:
                gap = interp.compression_gap(p, q, float(t), kappa)
                margin = min(margin, gap)
                fails += gap <= 0.0
                total += 1
        return fails, margin, total

    def aligned(k):
        n = int(rng.integers(1, 7))
        kappa = rng.uniform(0.25, 4.0)
        ps = rng.uniform(0.0, 10.0) * _unit(rng, n)
        if k % 5 == 0:
            scale = rng.uniform(0.0, 3.0)
            while abs(scale - 1.0) * np.linalg.norm(ps) < 1e-6:
                scale = rng.uniform(0.0, 3.0)
            qs = scale * ps
        else:
            qs = rng.uniform(0.0, 10.0) * _unit(rng, n)
            while np.dot(ps, qs) < 0.0 or np.linalg.norm(qs - ps) < 1e-6:
                qs = rng.uniform(0.0, 10.0) * _unit(rng, n)
        return hygeo.lift(ps, kappa), hygeo.lift(qs, kappa), kappa

    def benchmark_dim(_):
        kappa = rng.uniform(0.25, 4.0)
        ps = rng.uniform(0.0, 10.0) * _unit(rng, 32)
        qs = rng.uniform(0.0, 10.0) * _unit(rng, 32)
        while np.linalg.norm(qs - ps) < 1e-6:
            qs = rng.uniform(0.0, 10.0) * _unit(rng, 32)
        return hygeo.lift(ps, kappa), hygeo.lift(qs, kappa), kappa

    fails, margin, total = run_family(aligned, trials)
    res.add("gap > 0 on aligned pairs incl. same-direction collinear", total, fails, margin)

    fails, margin, total = run_family(benchmark_dim, max(trials // 5, 1))
    res.add("gap > 0 on random pairs at the operating dimension (d=32)",
            total, fails, margin)

    p = hygeo.lift(np.array([1.0, 0.0]), 1.0)
    q = hygeo.lift(np.array([-2.0, 0.0]), 1.0)
    counter = interp.compression_gap(p, q, 1.0 / 3.0, 1.0)
    res.add("documented origin-crossing counterexample reproduces (gap < 0)",
            1, int(not counter < 0.0), counter)
    return res


def _unit(rng, n):
    v = rng.standard_normal(n)
    return v / max(np.linalg.norm(v), 1e-12)


# ---------------------------------------------------------------------------

_PRIMITIVE_CASES = [
    ("sinh", tape.sinh, (-2.0, 2.0)),
    ("cosh", tape.cosh, (-2.0, 2.0)),
    ("exp", tape.exp, (-2.0, 2.0)),
    ("log", tape.log, (0.5, 4.0)),
    ("sqrt", tape.sqrt, (0.5, 4.0)),
    ("acosh", tape.acosh, (1.0 + 1e-4, 4.0)),
    ("sigmoid", tape.sigmoid, (-4.0, 4.0)),
]


@_timed
def check_gradients(seed=404, loss_configs=20):
    """Analytic gradients against the central-difference oracle."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("gradients")

    prim_fails = 0
    prim_worst = 0.0
    prim_trials = 0
    for name, fn, (lo, hi) in _PRIMITIVE_CASES:
        for _ in range(25):
            x0 = rng.uniform(lo, hi)
            pv = ParamVector.pack({"x": np.array([x0])})
            objective = lambda p, fn=fn: fn(p.view("x")[0])
            _, g = value_and_grad(objective, pv)
            fd = finite_diff_grad(objective, pv, 1e-6)
            rel = abs(g.flat[0] - fd.flat[0]) / max(abs(g.flat[0]), abs(fd.flat[0]), 1e-9)
            prim_worst = max(prim_worst, rel)
            prim_fails += rel >= 1e-6
            prim_trials += 1
    res.add("primitive derivatives match central differences (rel 1e-6)",
            prim_trials, prim_fails, prim_worst)

    comp_fails = 0
    comp_worst = 0.0
    for i in range(20):
        objective, pv = _composite_graph(rng, i)
        _, g = value_and_grad(objective, pv)
        fd = finite_diff_grad(objective, pv, 1e-6)
        rel = _max_rel_err(g.flat, fd.flat)
        comp_worst = max(comp_worst, rel)
        comp_fails += rel >= 1e-5
    res.add("20 composite graphs match central differences (rel 1e-5)",
            20, comp_fails, comp_worst)

    loss_fails = 0
    loss_worst = 0.0
    for i in range(loss_configs):
        b = int(rng.choice([4, 8]))
        d = int(rng.choice([4, 16]))
        d_b = 2 if d == 4 else 6
        cfg = ModelConfig(d=d, d_b=d_b)
        params = model_mod.init_params(cfg, rng)
        flat = params.flat + 0.05 * rng.standard_normal(len(params))
        params = ParamVector(flat, params.layout)
        x_s = rng.standard_normal((b, d))
        x_p = x_s + 0.5 * rng.standard_normal((b, d))
        x_b = rng.standard_normal((b, d_b))
        ablation = ("full", "no_interp", "euclidean_interp", "euclidean_space")[i % 4]
        objective = lambda pv: model_mod.total_loss(x_s, x_p, x_b, pv, cfg, ablation=ablation)
        _, g = value_and_grad(objective, params)
        fd = finite_diff_grad(objective, params, 1e-5)
        rel = _max_rel_err(g.flat, fd.flat)
        loss_worst = max(loss_worst, rel)
        loss_fails += rel >= 1e-4
    res.add("total loss gradient matches central differences (rel 1e-4)",
            loss_configs, loss_fails, loss_worst)

    lin_fails = 0
    lin_worst = 0.0
    for _ in range(20):
        pv = ParamVector.pack({"x": rng.standard_normal(4)})
        alpha, beta = rng.uniform(-2, 2, size=2)
        f = lambda p: tape.sum_(tape.sinh(p.view("x")) * p.view("x"))
        g_fn = lambda p: tape.dot(p.view("x"), p.view("x")) * tape.exp(p.view("x")[0] * 0.1)
        combined = lambda p: alpha * f(p) + beta * g_fn(p)
        _, gc = value_and_grad(combined, pv)
        _, gf = value_and_grad(f, pv)
        _, gg = value_and_grad(g_fn, pv)
        err = float(np.max(np.abs(gc.flat - (alpha * gf.flat + beta * gg.flat))))
        lin_worst = max(lin_worst, err)
        lin_fails += err >= 1e-10
    res.add("gradient linearity within 1e-10", 20, lin_fails, lin_worst)

    struct_fails = 0
    struct_worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 7))
        kappa = rng.uniform(0.25, 4.0)
        spatial = rng.uniform(-10, 10, size=n) + rng.standard_normal(n) * 1e-6
        resid = hygeo.constraint_residual(hygeo.lift(spatial, kappa), kappa)
        struct_worst = max(struct_worst, resid)
        struct_fails += resid >= 1e-9
    res.add("perturbed lifts never violate the constraint", 200, struct_fails, struct_worst)
    return res


def _max_rel_err(a, b):
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
    return float(np.max(np.abs(a - b) / denom))


def _composite_graph(rng, index):
    """One of several fixed graph shapes with randomized constants."""
    kind = index % 5
    if kind == 0:
        pv = ParamVector.pack({"x": rng.uniform(0.5, 1.5, size=3)})
        c = rng.standard_normal(3)
        return (lambda p: tape.sum_(tape.sinh(p.view("x")) * c)
                + tape.log(tape.dot(p.view("x"), p.view("x")))), pv
    if kind == 1:
        n = 3
        pv = ParamVector.pack({"x": rng.uniform(-1, 1, size=n)})
        kappa = rng.uniform(0.5, 2.0)
        def distance_sq(p):
            pt = hygeo.lift(p.view("x"), kappa)
            d = hygeo.geodesic_distance(hygeo.origin(n, kappa), pt, kappa)
            return d * d
        return distance_sq, pv
    if kind == 2:
        n = 4
        pv = ParamVector.pack({"x": rng.uniform(-1, 1, size=n), "k": np.array([0.0])})
        def lifted_distance(p):
            kappa = tape.exp(p.view("k")[0])
            pt = hygeo.exp_map_origin(p.view("x"), kappa)
            other = hygeo.lift(np.array([0.4, -0.2, 0.1, 0.3]), kappa)
            return hygeo.geodesic_distance(pt, other, kappa)
        return lifted_distance, pv
    if kind == 3:
        pv = ParamVector.pack({"m": rng.standard_normal((3, 3)), "v": rng.standard_normal(3)})
        def lse(p):
            rows = tape.matmul(p.view("m"), p.view("v"))
            return tape.sum_(tape.logsumexp(tape.reshape(rows, (1, 3)), axis=1))
        return lse, pv
    pv = ParamVector.pack({"w": rng.standard_normal(4), "b": np.array([rng.standard_normal()])})
    x = rng.standard_normal(4)
    return (lambda p: tape.sigmoid(tape.dot(p.view("w"), x) + p.view("b")[0])
            * tape.cosh(p.view("b")[0])), pv


# ---------------------------------------------------------------------------

@_timed
def check_augmentation(seed=505):
    """Blur kernel normalization, border policy, and the fovea blend."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("augmentation")

    const_worst = 0.0
    const_fails = 0
    for value in (0.0, 0.37, 1.0):
        img = np.full((17, 23), value)
        err = float(np.max(np.abs(synth.gaussian_blur(img, 2.0, 7) - value)))
        const_worst = max(const_worst, err)
        const_fails += err >= 1e-12
    res.add("constant image invariance within 1e-12", 3, const_fails, const_worst)

    # impulse response equals the normalized sampled kernel
    img = np.zeros((21, 21))
    img[10, 10] = 1.0
    sigma, radius = 1.5, 7
    half = radius // 2
    offs = np.arange(-half, half + 1)
    kernel2d = np.exp(-(offs[:, None] ** 2 + offs[None, :] ** 2) / (2 * sigma ** 2))
    kernel2d /= kernel2d.sum()
    got = synth.gaussian_blur(img, sigma, radius)[10 - half:10 + half + 1, 10 - half:10 + half + 1]
    imp_err = float(np.max(np.abs(got - kernel2d)))
    res.add("impulse response equals normalized kernel", 1, int(imp_err >= 1e-12), imp_err)

    oracle_worst = 0.0
    oracle_fails = 0
    for _ in range(20):
        img = rng.uniform(0.0, 1.0, size=(32, 32))
        sigma = rng.uniform(0.5, 3.0)
        radius = int(rng.choice([3, 5, 7]))
        fast = synth.gaussian_blur(img, sigma, radius)
        slow = _brute_force_blur(img, sigma, radius)
        err = float(np.max(np.abs(fast - slow)))
        oracle_worst = max(oracle_worst, err)
        oracle_fails += err >= 1e-9
    res.add("agrees with brute-force convolution within 1e-9", 20, oracle_fails, oracle_worst)

    rng_img = rng.uniform(0.0, 1.0, size=(24, 24))
    blur = synth.gaussian_blur(rng_img, 1.0, 5)
    contract = (blur.min() >= rng_img.min() - 1e-12) and (blur.max() <= rng_img.max() + 1e-12)
    res.add("blur contracts the value range", 1, int(not contract), 0.0)

    center = (12, 12)
    fb = synth.fovea_blur(rng_img, 3.0, 2.0, 7, center)
    center_err = abs(fb[center] - rng_img[center])
    res.add("fovea blur preserves the center pixel exactly", 1, int(center_err != 0.0), center_err)

    fb_id = synth.fovea_blur(rng_img, 1e-9, 2.0, 7, center)
    id_err = float(np.max(np.abs(fb_id - rng_img)))
    res.add("lam -> 0 limit is the identity within 1e-6", 1, int(id_err >= 1e-6), id_err)

    fb_sharp = synth.fovea_blur(rng_img, 1e6, 2.0, 7, center)
    blurred = synth.gaussian_blur(rng_img, 2.0, 7)
    far_err = abs(fb_sharp[0, 0] - blurred[0, 0])
    res.add("lam -> inf: far pixels equal the blurred image within 1e-9",
            1, int(far_err >= 1e-9), far_err)

    big = rng.uniform(0.0, 1.0, size=(64, 64))
    per = synth.gaussian_blur(big, 8.0, 31)
    sem = synth.fovea_blur(big, 3.0, 8.0, 51, (32, 32))
    distinct = float(np.max(np.abs(per - sem)))
    res.add("reference blur settings accepted and distinct", 1, int(distinct <= 0.0), distinct)

    mean_worst = 0.0
    mean_fails = 0
    for _ in range(5):
        img = rng.uniform(0.0, 1.0, size=(24, 24))
        fast = synth.gaussian_blur(img, 1.2, 5)
        slow = _brute_force_blur(img, 1.2, 5)
        inner = slice(4, 20)  # away from the replicated borders
        err = abs(fast[inner, inner].mean() - slow[inner, inner].mean())
        mean_worst = max(mean_worst, err)
        mean_fails += err >= 1e-6
    res.add("interior mean matches the brute-force oracle within 1e-6",
            5, mean_fails, mean_worst)
    return res


def _brute_force_blur(img, sigma, radius):
    half = radius // 2
    offs = np.arange(-half, half + 1)
    kernel = np.exp(-(offs[:, None] ** 2 + offs[None, :] ** 2) / (2.0 * sigma * sigma))
    kernel /= kernel.sum()
    h, w = img.shape
    out = np.zeros_like(img)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for m in range(-half, half + 1):
                for n in range(-half, half + 1):
                    ii = min(max(i - m, 0), h - 1)
                    jj = min(max(j - n, 0), w - 1)
                    acc += img[ii, jj] * kernel[m + half, n + half]
            out[i, j] = acc
    return out


# ---------------------------------------------------------------------------

@_timed
def check_optimizer(seed=606):
    """Update-rule identities and the scripted-trace oracle."""
    res = SuiteResult("optimizer")
    cfg = TrainConfig(lr=0.1, weight_decay=0.0, epochs=0)

    g = np.array([0.3, -2.0, 5e-3])
    p = np.zeros(3)
    new, _ = trainer.optimizer_step(p, g, trainer.AdamState.zeros(3), cfg)
    expected = -cfg.lr * g / (np.abs(g) + trainer.ADAM_EPS)
    first_err = float(np.max(np.abs(new - expected)))
    res.add("bias-corrected first step normalizes to sign", 1, int(first_err >= 1e-12), first_err)

    cfg_wd = TrainConfig(lr=0.1, weight_decay=0.1, epochs=0)
    p = np.array([2.0, -3.0])
    new, _ = trainer.optimizer_step(p, np.zeros(2), trainer.AdamState.zeros(2), cfg_wd)
    decay_err = float(np.max(np.abs(new - p * (1.0 - 0.01))))
    res.add("zero gradient leaves pure decay by (1 - lr*wd)", 1, int(decay_err >= 1e-15), decay_err)

    trace_err = _quadratic_trace_error()
    res.add("three-step quadratic trace matches hand-rolled reference (1e-12)",
            1, int(trace_err >= 1e-12), trace_err)

    raised = False
    try:
        trainer.optimizer_step(np.zeros(2), np.array([1.0, np.nan]),
                               trainer.AdamState.zeros(2), cfg)
    except ArithmeticError:
        raised = True
    res.add("non-finite gradient raises", 1, int(not raised), 0.0)
    return res


def _quadratic_trace_error():
    """Drive f(x) = 2x^2 for three steps; replay the update rule by hand."""
    lr, wd, b1, b2, eps = 0.05, 0.01, 0.9, 0.999, 1e-8
    cfg = TrainConfig(lr=lr, weight_decay=wd, epochs=0)
    x = np.array([1.5])
    state = trainer.AdamState.zeros(1)
    got = []
    for _ in range(3):
        grad = np.array([4.0 * x[0]])
        x, state = trainer.optimizer_step(x, grad, state, cfg)
        got.append(x[0])

    # independent scalar replay of the same rule
    xref, m, v = 1.5, 0.0, 0.0
    ref = []
    for step in range(1, 4):
        g = 4.0 * xref
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1 ** step)
        vh = v / (1 - b2 ** step)
        xref = xref - lr * (mh / (math.sqrt(vh) + eps) + wd * xref)
        ref.append(xref)
    return float(np.max(np.abs(np.array(got) - np.array(ref))))


# ---------------------------------------------------------------------------

@_timed
def check_model(seed=707):
    """Loss symmetries: permutation, temperature scaling, bounds, endpoints."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("model")
    d, d_b, b = 8, 4, 6
    cfg = ModelConfig(d=d, d_b=d_b)
    params = model_mod.init_params(cfg, rng)
    params = ParamVector(params.flat + 0.05 * rng.standard_normal(len(params)), params.layout)
    x_s = rng.standard_normal((b, d))
    x_p = x_s + 0.5 * rng.standard_normal((b, d))
    x_b = rng.standard_normal((b, d_b))

    base = float(tape.value_of(model_mod.total_loss(x_s, x_p, x_b, params, cfg)))
    worst_perm = 0.0
    for _ in range(5):
        perm = rng.permutation(b)
        permuted = float(tape.value_of(model_mod.total_loss(
            x_s[perm], x_p[perm], x_b[perm], params, cfg)))
        worst_perm = max(worst_perm, abs(permuted - base))
    res.add("permutation equivariance within 1e-10", 5, int(worst_perm >= 1e-10), worst_perm)

    scale_err = _temperature_scaling_err(rng)
    res.add("joint similarity/temperature scaling invariance within 1e-10",
            20, int(scale_err >= 1e-10), scale_err)

    bound_fails = 0
    bound_margin = math.inf
    for _ in range(50):
        dist = np.abs(rng.standard_normal((5, 5))) * 3.0
        tau = rng.uniform(0.05, 2.0)
        loss = float(tape.value_of(model_mod.nce_from_distances(dist, tau)))
        s = -dist / 1.0
        lower = 2.0 * (np.log(5) - (s.max() - s.min()) / tau)
        bound_margin = min(bound_margin, loss - lower)
        bound_fails += loss < lower - 1e-9
    res.add("loss lower bound 2(log B - (max s - min s)/tau)", 50, bound_fails, bound_margin)

    # forcing t to 0 reproduces the no-interpolation pipeline
    forced = params.copy()
    forced.flat[forced.slice_of("w_t")] = 0.0
    forced.flat[forced.slice_of("w_t_bias")] = -1000.0
    full_loss = float(tape.value_of(model_mod.total_loss(x_s, x_p, x_b, forced, cfg, "full")))
    no_interp = float(tape.value_of(model_mod.total_loss(x_s, x_p, x_b, forced, cfg, "no_interp")))
    struct_err = abs(full_loss - no_interp)
    res.add("t -> 0 reduces full to the no-interpolation loss within 1e-9",
            1, int(struct_err >= 1e-9), struct_err)

    # identical embeddings: each direction collapses to log B
    ids = np.arange(4)
    point = hygeo.lift(np.array([0.3, -0.2]), 1.0)
    batch = model_mod.EmbeddingBatch([point] * 4, ids)
    uniform = model_mod.contrastive_loss(batch, batch, tau=0.7, kappa=1.0)
    unif_err = abs(uniform - math.log(4))
    res.add("identical embeddings give log B per direction", 1, int(unif_err >= 1e-10), unif_err)
    return res


def _temperature_scaling_err(rng):
    worst = 0.0
    for _ in range(20):
        dist = np.abs(rng.standard_normal((4, 4)))
        tau = rng.uniform(0.1, 2.0)
        c = rng.uniform(0.5, 3.0)
        a = float(tape.value_of(model_mod.nce_from_distances(dist, tau)))
        b = float(tape.value_of(model_mod.nce_from_distances(dist * c, tau * c)))
        worst = max(worst, abs(a - b))
    return worst


# ---------------------------------------------------------------------------

@_timed
def check_synth(seed=808):
    """Generator determinism and planted structure; file format round trip."""
    res = SuiteResult("synth")
    cfg = SynthConfig(n_concepts=40, images_per_concept=4, d=16, d_b=6, seed=99)
    a_train, a_test = synth.generate(cfg)
    b_train, b_test = synth.generate(cfg)
    identical = (np.array_equal(a_train.semantic, b_train.semantic)
                 and np.array_equal(a_train.brain, b_train.brain)
                 and np.array_equal(a_test.perceptual, b_test.perceptual))
    res.add("same seed reproduces byte-identical datasets", 1, int(not identical), 0.0)

    c_train, _ = synth.generate(SynthConfig(n_concepts=40, images_per_concept=4,
                                            d=16, d_b=6, seed=100))
    res.add("distinct seeds give distinct datasets", 1,
            int(np.array_equal(a_train.semantic, c_train.semantic)), 0.0)

    disjoint = len(np.intersect1d(a_train.concept_ids, a_test.concept_ids)) == 0
    res.add("test concepts disjoint from train", 1, int(not disjoint), 0.0)

    within, between = _semantic_spreads(a_train)
    res.add("within-concept semantic distance below between-concept",
            1, int(not within < between), within - between)

    clean = SynthConfig(n_concepts=10, images_per_concept=3, d=8, d_b=4,
                        entangle_weight=1.0, brain_noise_std=0.0, seed=5)
    tr, _ = synth.generate(clean)
    # brain must then be an exact linear image of the semantic features
    coef, *_ = np.linalg.lstsq(tr.semantic, tr.brain, rcond=None)
    lin_err = float(np.max(np.abs(tr.semantic @ coef - tr.brain)))
    res.add("entangle=1, noise=0 makes brain linear in semantic", 1,
            int(lin_err >= 1e-9), lin_err)

    blob = synth.dataset_to_bytes(a_test)
    back = synth.dataset_from_bytes(blob)
    exact = (np.array_equal(a_test.semantic, back.semantic)
             and np.array_equal(a_test.perceptual, back.perceptual)
             and np.array_equal(a_test.brain, back.brain)
             and np.array_equal(a_test.concept_ids, back.concept_ids))
    res.add("binary round trip is bit-exact", 1, int(not exact), 0.0)

    truncated_ok = False
    try:
        synth.dataset_from_bytes(blob[:len(blob) - 3])
    except synth.EmbeddingFormatError as err:
        truncated_ok = "byte" in str(err)
    res.add("truncation error names the byte offset", 1, int(not truncated_ok), 0.0)

    empty = synth.PairedDataset(np.zeros((0, 4)), np.zeros((0, 4)), np.zeros((0, 2)),
                                np.zeros(0, dtype=np.int64))
    round_empty = synth.dataset_from_bytes(synth.dataset_to_bytes(empty))
    res.add("empty dataset writes a header-only file", 1, int(len(round_empty) != 0), 0.0)
    return res


def _semantic_spreads(ds):
    ids = np.asarray(ds.concept_ids)
    within = []
    between = []
    firsts = {}
    for i in range(len(ds)):
        c = int(ids[i])
        if c in firsts:
            within.append(np.linalg.norm(ds.semantic[i] - ds.semantic[firsts[c]]))
        else:
            firsts[c] = i
    reps = sorted(firsts.values())
    for a, b in zip(reps, reps[1:]):
        between.append(np.linalg.norm(ds.semantic[a] - ds.semantic[b]))
    return float(np.mean(within)), float(np.mean(between))


# ---------------------------------------------------------------------------

@_timed
def check_retrieval(seed=909):
    """Chance level for untrained models; perfection for oracle alignment."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("retrieval")
    data_cfg = SynthConfig(n_concepts=200, images_per_concept=1, d=16, d_b=6, seed=11)
    _, test = synth.generate(data_cfg)
    n_ways = len(test)
    cfg = ModelConfig(d=16, d_b=6)
    accs = []
    nesting_fails = 0
    for _ in range(20):
        params = model_mod.init_params(cfg, rng)
        params = ParamVector(params.flat + 0.1 * rng.standard_normal(len(params)),
                             params.layout)
        rep = trainer.evaluate_retrieval(test.brain, test.semantic, test.perceptual,
                                         params, cfg)
        accs.append(rep.top1)
        nesting_fails += rep.top5 < rep.top1
    res.add("top5 >= top1", 20, int(nesting_fails), 0.0)
    accs = np.array(accs)
    se = max(accs.std(ddof=1) / np.sqrt(len(accs)),
             np.sqrt((1.0 / n_ways) * (1 - 1.0 / n_ways) / (len(accs) * n_ways)))
    dev = abs(accs.mean() - 1.0 / n_ways)
    res.add("untrained accuracy within 3 SE of chance", 20, int(dev > 3 * se), dev / se)

    oracle_top1 = _oracle_alignment_top1()
    res.add("oracle-aligned embeddings reach top-1 = 1.0", 1,
            int(oracle_top1 != 1.0), 1.0 - oracle_top1)
    return res


def _oracle_alignment_top1():
    """Craft data and parameters so pair i maps to identical points.

    With entanglement 1 and no noise the brain signal is an exact linear image
    of the semantic feature, so setting the brain encoder to the best linear
    decoder and the visual projections to the matching rank-limited map makes
    both towers emit the same tangent vector for every item.
    """
    d = 8
    data_cfg = SynthConfig(n_concepts=48, images_per_concept=1, d=d, d_b=d - 1,
                           perceptual_scale=1e-9, entangle_weight=1.0,
                           brain_noise_std=0.0, seed=21)
    _, test = synth.generate(data_cfg)
    decoder, *_ = np.linalg.lstsq(test.brain, test.semantic, rcond=None)  # (d_b, d)
    fitted = test.brain @ decoder
    visual_map, *_ = np.linalg.lstsq(test.semantic, fitted, rcond=None)   # (d, d)
    cfg = ModelConfig(d=d, d_b=d - 1)
    named = {
        "w_s": visual_map.T, "w_p": visual_map.T, "w_t": np.zeros(d),
        "w_t_bias": np.zeros(()),
        "brain_w": decoder, "brain_b": np.zeros(d),
        "alpha_v": np.array(0.5), "alpha_b": np.array(0.5),
        "log_tau": np.array(np.log(0.07)), "log_kappa": np.array(0.0),
    }
    oracle = ParamVector.pack(named)
    assert oracle.layout == model_mod.init_params(cfg, np.random.default_rng(0)).layout
    rep = trainer.evaluate_retrieval(test.brain, test.semantic, test.perceptual,
                                     oracle, cfg)
    return rep.top1


# ---------------------------------------------------------------------------

@_timed
def check_training(seed=111):
    """Loop determinism, the zero-epoch identity, and loss decrease."""
    res = SuiteResult("training")
    data_cfg = SynthConfig(n_concepts=30, images_per_concept=4, d=12, d_b=5, seed=7)
    train_set, _ = synth.generate(data_cfg)
    cfg = ModelConfig(d=12, d_b=5)
    params = model_mod.init_params(cfg, np.random.default_rng(2))
    tcfg = TrainConfig(epochs=4, batch_size=32, seed=3)

    p1, h1 = trainer.train(train_set, params, cfg, tcfg)
    p2, h2 = trainer.train(train_set, params, cfg, tcfg)
    res.add("identical seeds give bit-identical parameters", 1,
            int(not (np.array_equal(p1.flat, p2.flat) and h1 == h2)), 0.0)

    p0, h0 = trainer.train(train_set, params, cfg, TrainConfig(epochs=0, batch_size=32, seed=3))
    res.add("zero epochs returns the initial parameters", 1,
            int(not (np.array_equal(p0.flat, params.flat) and h0 == [])), 0.0)

    res.add("final epoch loss below first epoch loss", 1,
            int(not h1[-1] < h1[0]), h1[-1] - h1[0])
    return res


# ---------------------------------------------------------------------------

DEFAULT_BENCH_DATA = SynthConfig()
DEFAULT_BENCH_TRAIN = TrainConfig()


def run_benchmark(seed, ablation, data_config=None, train_config=None,
                  model_kwargs=None):
    """Train one variant end to end; returns (top1, top5, params, model config)."""
    data_config = data_config or DEFAULT_BENCH_DATA
    base = train_config or DEFAULT_BENCH_TRAIN
    data_cfg = SynthConfig(**{**_asdict(data_config), "seed": 1000 + seed})
    train_set, test_set = synth.generate(data_cfg)
    cfg = ModelConfig(d=data_cfg.d, d_b=data_cfg.d_b, loss_mode=base.loss_mode,
                      **(model_kwargs or {}))
    params = model_mod.init_params(cfg, np.random.default_rng(5000 + seed))
    tcfg = TrainConfig(lr=base.lr, weight_decay=base.weight_decay,
                       batch_size=base.batch_size, epochs=base.epochs,
                       seed=seed, loss_mode=base.loss_mode, ablation=ablation)
    trained, history = trainer.train(train_set, params, cfg, tcfg)
    rep = trainer.evaluate_retrieval(test_set.brain, test_set.semantic,
                                     test_set.perceptual, trained, cfg,
                                     ablation=ablation)
    return rep, trained, cfg, history, test_set


def _asdict(cfg):
    from dataclasses import asdict
    return asdict(cfg)


@_timed
def check_ordering(seeds=(0, 1, 2, 3, 4), data_config=None, train_config=None):
    """Benchmark ordering: the full pipeline beats each ablation per seed."""
    res = SuiteResult("ordering")
    accs = {name: [] for name in ABLATION_ORDER}
    for seed in seeds:
        for name in ABLATION_ORDER:
            rep, *_ = run_benchmark(seed, name, data_config, train_config)
            accs[name].append(rep.top1)
    wins = {name: sum(f > a for f, a in zip(accs["full"], accs[name]))
            for name in ABLATION_ORDER if name != "full"}
    needed = len(seeds) - 1
    for name, w in wins.items():
        res.add(f"full > {name} (top-1, per seed)", len(seeds), int(w < needed),
                float(np.mean(accs["full"]) - np.mean(accs[name])))
    res.extra["accuracies"] = accs
    return res


ABLATION_ORDER = ("full", "no_interp", "euclidean_interp", "euclidean_space")

SUITES = {
    "geometry": check_geometry,
    "interpolation": check_interpolation,
    "compression": check_compression,
    "gradients": check_gradients,
    "augmentation": check_augmentation,
    "optimizer": check_optimizer,
    "model": check_model,
    "synth": check_synth,
    "retrieval": check_retrieval,
    "training": check_training,
    "ordering": check_ordering,
}


def run_suites(names, trials=None):
    """Run the named suites (or all); returns the list of SuiteResults."""
    if isinstance(names, str):
        names = [names]
    if "all" in names:
        names = list(SUITES)
    results = []
    for name in names:
        if name not in SUITES:
            raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)} or 'all'")
        fn = SUITES[name]
        if trials is not None and name in ("geometry", "interpolation", "compression"):
            results.append(fn(trials=trials))
        else:
            results.append(fn())
    return results
