"""Release gate: one test per acceptance property, at the stated tolerance.

Run with -v to get a single pass/fail line per criterion. Each test is
self-contained; oracles are recomputed inline rather than imported from
the unit suites so a regression here points at the product, not at
shared test plumbing.
"""

import json
import math
import time

import numpy as np
import pytest

from fxsearcher.audio import AudioBuffer
from fxsearcher.effects import (
    apply_bitcrush,
    apply_chain,
    apply_delay,
    apply_distortion,
    apply_equalizer,
    apply_pitch_shift,
    apply_reverb,
)
from fxsearcher.gp import fit_gp
from fxsearcher.params import (
    NUM_EQ_BANDS,
    NUM_PARAMS,
    decode_params,
    neutral_params,
)
from fxsearcher.pipeline import RunConfig, run_optimization
from fxsearcher.scoring import ScoreBreakdown
from fxsearcher.search import (
    SearchConfig,
    expected_improvement,
    optimize,
    read_trace_csv,
)

from wavegen import impulse, noise, sine


def _gains(**per_band):
    g = [0.0] * NUM_EQ_BANDS
    for idx, val in per_band.items():
        g[int(idx[1:])] = val
    return g


def _spectral_peak_hz(samples, sample_rate):
    w = samples[:8192] * np.hanning(min(len(samples), 8192))
    mag = np.abs(np.fft.rfft(w, n=8192))
    return float(np.fft.rfftfreq(8192, 1.0 / sample_rate)[int(np.argmax(mag))])


def test_c1_dsp_oracle_suite():
    """Every effect example at its stated tolerance, in under 60 seconds."""
    started = time.perf_counter()

    # equalizer: unity, +6 dB band oracle, above-Nyquist skip
    buf = sine(1000.0, 0.5, 48000, amplitude=0.25)
    flat = apply_equalizer(buf, [0.0] * NUM_EQ_BANDS)
    assert np.max(np.abs(flat.samples - buf.samples)) < 1e-9
    boosted = apply_equalizer(buf, _gains(b8=6.0))  # band 8 = 1000 Hz
    mid = slice(6000, 18000)  # steady state, away from filter transients
    gain_db = 20.0 * math.log10(
        float(np.sqrt(np.mean(boosted.samples[0, mid] ** 2)))
        / float(np.sqrt(np.mean(buf.samples[0, mid] ** 2)))
    )
    assert abs(gain_db - 6.0) < 0.1
    low_rate = sine(440.0, 0.25, 22050)
    skipped = apply_equalizer(low_rate, _gains(b14=-12.0))  # 16 kHz > Nyquist
    np.testing.assert_array_equal(skipped.samples, low_rate.samples)

    # distortion: tanh values to 1e-6
    half = AudioBuffer(np.full(64, 0.5), 48000)
    assert np.all(apply_distortion(AudioBuffer(np.zeros(64), 48000), 12.0).samples == 0.0)
    assert abs(float(apply_distortion(half, 0.0).samples[0, 0]) - math.tanh(0.5)) < 1e-6
    assert abs(float(apply_distortion(half, 20.0).samples[0, 0]) - math.tanh(5.0)) < 1e-6

    # bitcrush: exact quantization
    assert float(apply_bitcrush(AudioBuffer(np.array([0.3]), 48000), 8.0).samples[0, 0]) == 38.0 / 128.0
    assert float(apply_bitcrush(AudioBuffer(np.zeros(8), 48000), 5.0).samples[0, 0]) == 0.0
    xs = np.linspace(-1.0, 1.0, 101)
    crushed16 = apply_bitcrush(AudioBuffer(xs, 48000), 16.0)
    assert np.max(np.abs(crushed16.samples - xs)) <= 2.0 ** -15

    # pitch shift: bypass, octave peaks within 1 FFT bin, length within 1%
    tone = sine(440.0, 0.6, 48000, amplitude=0.5)
    np.testing.assert_array_equal(apply_pitch_shift(tone, 0.0).samples, tone.samples)
    bin_hz = 48000.0 / 8192.0
    up = apply_pitch_shift(tone, 12.0)
    down = apply_pitch_shift(tone, -12.0)
    assert abs(_spectral_peak_hz(up.samples[0], 48000) - 880.0) <= bin_hz
    assert abs(_spectral_peak_hz(down.samples[0], 48000) - 220.0) <= bin_hz
    assert abs(up.samples.shape[1] - tone.samples.shape[1]) <= 0.01 * tone.samples.shape[1]

    # delay: hand-unrolled feedback taps to 1e-9
    echoed = apply_delay(impulse(400, 1000), 0.1)
    for tap, expect in ((0, 0.5), (100, 0.5), (200, 0.15), (300, 0.045)):
        assert abs(float(echoed.samples[0, tap]) - expect) < 1e-9
    assert np.all(apply_delay(AudioBuffer(np.zeros(500), 1000), 0.2).samples == 0.0)
    short = noise(0.5, 8000, seed=5)
    np.testing.assert_array_equal(apply_delay(short, 1.0).samples, 0.5 * short.samples)

    # reverb: dry passthrough, silence, tail energy past 0.5 s
    dry = noise(0.2, 44100, seed=6)
    np.testing.assert_array_equal(apply_reverb(dry, 0.5, 0.5, 0.0).samples, dry.samples)
    assert np.all(apply_reverb(AudioBuffer(np.zeros(1000), 44100), 0.9, 0.1, 1.0).samples == 0.0)
    ir = apply_reverb(impulse(44100, 44100), 0.9, 0.2, 1.0)
    tail = ir.samples[0, 22050:44100]
    assert float(np.sum(tail * tail)) > 1e-6

    # chain composition examples
    src = noise(0.3, 16000, seed=7)
    only_dist = neutral_params().to_dict()
    only_dist["enable_distortion"] = True
    from fxsearcher.params import FxParams

    shaped = apply_chain(src, FxParams.from_dict(only_dist))
    np.testing.assert_array_equal(shaped.samples, np.tanh(src.samples))

    rng = np.random.default_rng(8)
    full = decode_params(rng.random(NUM_PARAMS))
    gated = apply_chain(src, full, ("equalizer", "reverb"))
    manual = apply_reverb(
        apply_equalizer(src, full.eq_gain_db),
        full.reverb_room_size,
        full.reverb_damping,
        full.reverb_wet_level,
    )
    np.testing.assert_array_equal(gated.samples, manual.samples)

    assert time.perf_counter() - started < 60.0


def test_c2_neutral_chain_identity():
    """Flags off, EQ 0 dB, wet 0: output == input within 1e-9, 10 buffers."""
    rng = np.random.default_rng(0xACCE)
    params = neutral_params()
    for case in range(10):
        rate = int(rng.choice([8000, 16000, 22050, 44100, 48000]))
        channels = int(rng.choice([1, 2]))
        buf = noise(float(rng.uniform(0.1, 0.4)), rate, seed=case, channels=channels)
        out = apply_chain(buf, params)
        assert out.sample_rate == buf.sample_rate
        assert np.max(np.abs(out.samples - buf.samples)) < 1e-9, f"case {case}"


def _loop_kernel(xa, xb, lengthscales, sf2):
    out = np.empty((len(xa), len(xb)))
    for i in range(len(xa)):
        for j in range(len(xb)):
            r2 = 0.0
            for c in range(xa.shape[1]):
                d = (xa[i, c] - xb[j, c]) / lengthscales[c]
                r2 += d * d
            t = math.sqrt(5.0 * r2)
            out[i, j] = sf2 * (1.0 + t + t * t / 3.0) * math.exp(-t)
    return out


def test_c3_gp_matches_dense_oracle():
    """Posterior mean/variance vs. brute-force Gram solve: 1e-8 relative,
    50 random 5-point problems."""
    rng = np.random.default_rng(0x6B)
    for problem in range(50):
        x = rng.random((5, NUM_PARAMS))
        y = rng.normal(0.0, 1.0, size=5)
        model = fit_gp(x, y)

        y_mean, y_std = float(np.mean(y)), float(np.std(y))
        if y_std < 1e-12:
            y_std = 1.0
        sf2 = model.signal_variance / y_std**2
        sn2 = model.noise_variance / y_std**2
        gram = _loop_kernel(x_m := model.train_x, x_m, model.lengthscales, sf2)
        a = gram + sn2 * np.eye(len(y))

        pts = rng.random((6, NUM_PARAMS))
        cross = _loop_kernel(pts, x_m, model.lengthscales, sf2)
        alpha = np.linalg.solve(a, (model.train_y - y_mean) / y_std)
        mu_ref = y_mean + y_std * (cross @ alpha)
        var_ref = (sf2 - np.einsum("ij,ji->i", cross, np.linalg.solve(a, cross.T))) * y_std**2

        mu, sigma = model.predict(pts)
        scale_mu = max(float(np.max(np.abs(mu_ref))), y_std)
        scale_var = max(float(np.max(np.abs(var_ref))), model.signal_variance)
        assert np.max(np.abs(mu - mu_ref)) <= 1e-8 * scale_mu, f"problem {problem}: mean"
        assert np.max(np.abs(sigma**2 - var_ref)) <= 1e-8 * scale_var, f"problem {problem}: variance"


def test_c4_ei_matches_quadrature():
    """Closed-form EI within 1e-6 of 10^6-point integration, 100 triples."""
    rng = np.random.default_rng(0xE1)
    t_grid = np.empty(1_000_001)
    for trial in range(100):
        mu = float(rng.uniform(-2.0, 2.0))
        sigma = float(10.0 ** rng.uniform(-3.0, 0.3))
        best = float(rng.uniform(-2.0, 2.0))
        lo = min(mu - 12.0 * sigma, best)
        hi = max(mu + 12.0 * sigma, best + 12.0 * sigma)
        t_grid[:] = np.linspace(lo, hi, t_grid.size)
        pdf = np.exp(-0.5 * ((t_grid - mu) / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))
        reference = float(np.trapezoid(np.maximum(t_grid - best, 0.0) * pdf, t_grid))
        assert abs(expected_improvement(mu, sigma, best) - reference) <= 1e-6, f"triple {trial}"


def test_c5_end_to_end_synthetic_optimization():
    """-||x - p*||^2 on 3 active dims, budget 100: within L-inf 0.1 of p*
    and beats a 50k-sample random search on >= 8 of 10 seeds, in < 5 min."""
    started = time.perf_counter()
    wins = 0
    worst_linf = 0.0
    for seed in range(10):
        p_star = np.random.default_rng(1000 + seed).uniform(0.05, 0.95, size=3)

        def objective(x):
            return ScoreBreakdown.from_parts(-float(np.sum((x[:3] - p_star) ** 2)), 0.0)

        result = optimize(objective, SearchConfig(max_iterations=100, seed=seed))
        linf = float(np.max(np.abs(result.best_x[:3] - p_star)))
        worst_linf = max(worst_linf, linf)
        assert linf <= 0.1, f"seed {seed}: best is {linf:.4f} from p* in L-inf"

        samples = np.random.default_rng(seed).random((50_000, 3))
        random_best = float(np.max(-np.sum((samples - p_star) ** 2, axis=1)))
        if result.best_score.s_final >= random_best:
            wins += 1

    elapsed = time.perf_counter() - started
    assert wins >= 8, f"beat random search on only {wins}/10 seeds"
    assert elapsed < 300.0, f"took {elapsed:.0f}s"


def test_c6_control_flow_constants():
    """Defaults: trace capped at 100; constant-after-10 stops at exactly 40."""
    calls = {"n": 0}

    def improving(x):
        calls["n"] += 1
        return ScoreBreakdown.from_parts(0.01 * calls["n"], 0.0)

    capped = optimize(improving, SearchConfig())
    assert len(capped.trace) <= 100
    assert capped.n_evaluations == 100
    assert capped.stop_reason == "max_iterations"

    calls["n"] = 0

    def plateau(x):
        calls["n"] += 1
        return ScoreBreakdown.from_parts(0.1 * min(calls["n"], 10), 0.0)

    halted = optimize(plateau, SearchConfig())
    assert halted.stop_reason == "patience"
    assert halted.n_evaluations == 40, f"halted at {halted.n_evaluations}, expected 40"


def test_c7_guide_prompt_ablation_wiring(tmp_path):
    """--no-guide gives s_final == s_target everywhere; the two modes reach
    different incumbents on the builtin backend with a contrastive pair."""
    from fxsearcher.audio import save_wav

    wav = tmp_path / "in.wav"
    save_wav(noise(0.25, 16000, seed=21), str(wav))
    search = SearchConfig(max_iterations=25, init_samples=8, seed=11)
    common = dict(
        input_path=str(wav),
        target_prompt="a bright clean crisp sound",
        guide_prompt="a dark muddy distorted sound",
        backend="builtin-test",
        search=search,
    )
    guided = run_optimization(
        RunConfig(output_dir=str(tmp_path / "guided"), guide_enabled=True, **common)
    )
    ablated = run_optimization(
        RunConfig(output_dir=str(tmp_path / "ablated"), guide_enabled=False, **common)
    )

    for row in read_trace_csv(ablated.trace_csv_path):
        assert row["s_guide"] == 0.0
        assert row["s_final"] == row["s_target"]
    guided_rows = read_trace_csv(guided.trace_csv_path)
    assert any(row["s_guide"] != 0.0 for row in guided_rows)
    assert not np.array_equal(guided.result.best_x, ablated.result.best_x)


def test_c8_same_seed_byte_identical_artifacts(tmp_path):
    from fxsearcher.audio import save_wav

    wav = tmp_path / "in.wav"
    save_wav(noise(0.25, 16000, seed=22), str(wav))

    def run(into):
        return run_optimization(RunConfig(
            input_path=str(wav),
            output_dir=str(into),
            target_prompt="a warm soft sound",
            backend="builtin-test",
            search=SearchConfig(max_iterations=12, init_samples=5, seed=99),
        ))

    first = run(tmp_path / "one")
    second = run(tmp_path / "two")
    with open(first.params_path, "rb") as fh:
        params_one = fh.read()
    with open(second.params_path, "rb") as fh:
        params_two = fh.read()
    assert params_one == params_two
    with open(first.trace_csv_path, "rb") as fh:
        trace_one = fh.read()
    with open(second.trace_csv_path, "rb") as fh:
        trace_two = fh.read()
    assert trace_one == trace_two


def test_c9_fuzz_no_nonfinite_output():
    """1000 random parameter sets x noise buffers: finite output, no raise."""
    rng = np.random.default_rng(0xF422)
    for case in range(1000):
        params = decode_params(rng.random(NUM_PARAMS))
        rate = int(rng.choice([8000, 11025, 16000]))
        buf = noise(
            float(rng.uniform(0.05, 0.25)),
            rate,
            seed=case,
            channels=int(rng.choice([1, 2])),
            amplitude=float(rng.uniform(0.1, 1.0)),
        )
        out = apply_chain(buf, params)
        assert np.all(np.isfinite(out.samples)), f"case {case}"
