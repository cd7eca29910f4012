"""Command-line interface.

    fxsearcher optimize --input in.wav --out-dir run1 --prompt "..." [...]
    fxsearcher apply --input in.wav --params run1/params.json --output out.wav
    fxsearcher report run1 [--svg plot.svg]

Exit codes: 0 success, 2 configuration or file problem, 3 embedding
backend unreachable or misbehaving, 4 optimization aborted.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .audio import load_wav, save_wav
from .effects import apply_chain
from .errors import (
    BackendProtocolError,
    BackendTransportError,
    CorruptFileError,
    OptimizationAborted,
    ParamValidationError,
    UnsupportedFormatError,
)
from .params import ALL_STAGES, FxParams
from .pipeline import BUILTIN_BACKEND_NAME, RunConfig, run_optimization
from .scoring import DEFAULT_GUIDE_PROMPT
from .search import SearchConfig, read_trace_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_ABORTED = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fxsearcher",
        description="Transform audio to match a text description by "
        "searching effect-chain parameters.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_opt = sub.add_parser("optimize", help="search for the best parameter set")
    p_opt.add_argument("--input", help="input WAV file")
    p_opt.add_argument("--out-dir", help="directory for run artifacts")
    p_opt.add_argument("--prompt", help="target text description")
    p_opt.add_argument("--guide-prompt", help="artifact description to steer away from")
    p_opt.add_argument("--no-guide", action="store_true", default=None,
                       help="disable the guide prompt term")
    p_opt.add_argument("--backend-url", help="embedding service base URL")
    p_opt.add_argument("--builtin-backend", action="store_true", default=None,
                       help="use the in-process deterministic test backend")
    p_opt.add_argument("--stages", help="comma-separated stage subset "
                       f"(default: {','.join(ALL_STAGES)})")
    p_opt.add_argument("--max-iters", type=int, help="evaluation budget (default 100)")
    p_opt.add_argument("--patience", type=int,
                       help="stop after this many evaluations without improvement (default 30)")
    p_opt.add_argument("--init-samples", type=int,
                       help="quasi-random evaluations before the first model fit (default 20)")
    p_opt.add_argument("--seed", type=int, help="64-bit seed (default: drawn randomly)")
    p_opt.add_argument("--config", help="JSON file with the same keys; flags win")

    p_apply = sub.add_parser("apply", help="re-render audio from a saved parameter set")
    p_apply.add_argument("--input", required=True, help="input WAV file")
    p_apply.add_argument("--params", required=True, help="params.json from a run")
    p_apply.add_argument("--output", required=True, help="output WAV path")
    p_apply.add_argument("--stages", help="comma-separated stage subset")

    p_rep = sub.add_parser("report", help="summarize a finished run")
    p_rep.add_argument("run_path", help="run directory or trace.csv path")
    p_rep.add_argument("--svg", help="where to write the score plot "
                       "(default: report.svg next to the trace)")
    return parser


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _parse_stages(text):
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _resolve_optimize_config(args) -> RunConfig:
    file_cfg = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except OSError as exc:
            raise ValueError(f"cannot read config file: {exc}")
        except json.JSONDecodeError as exc:
            raise ValueError(f"config file is not valid JSON: {exc}")
        if not isinstance(file_cfg, dict):
            raise ValueError("config file must hold a JSON object")

    def pick(flag_value, key, default):
        if flag_value is not None:
            return flag_value
        return file_cfg.get(key, default)

    input_path = pick(args.input, "input", None)
    out_dir = pick(args.out_dir, "out_dir", None)
    prompt = pick(args.prompt, "prompt", None)
    if not input_path:
        raise ValueError("--input is required (flag or config file)")
    if not out_dir:
        raise ValueError("--out-dir is required (flag or config file)")
    if not prompt:
        raise ValueError("--prompt is required (flag or config file)")

    backend_url = pick(args.backend_url, "backend_url", None)
    use_builtin = pick(args.builtin_backend, "builtin_backend", False)
    if backend_url and use_builtin:
        raise ValueError("--backend-url and --builtin-backend are mutually exclusive")
    backend = backend_url or BUILTIN_BACKEND_NAME

    no_guide = pick(args.no_guide, "no_guide", False)
    stages = pick(args.stages, "stages", None)
    if isinstance(stages, str):
        stages = _parse_stages(stages)
    seed = pick(args.seed, "seed", None)
    if seed is None:
        seed = int.from_bytes(os.urandom(8), "little") >> 1
        print(f"seed not given; using {seed}")

    try:
        search = SearchConfig(
            max_iterations=int(pick(args.max_iters, "max_iters", 100)),
            patience=int(pick(args.patience, "patience", 30)),
            init_samples=int(pick(args.init_samples, "init_samples", 20)),
            seed=int(seed),
        )
        return RunConfig(
            input_path=str(input_path),
            output_dir=str(out_dir),
            target_prompt=str(prompt),
            guide_prompt=str(pick(args.guide_prompt, "guide_prompt", DEFAULT_GUIDE_PROMPT)),
            guide_enabled=not no_guide,
            backend=backend,
            enabled_stages=tuple(stages) if stages else ALL_STAGES,
            search=search,
        )
    except (ValueError, ParamValidationError) as exc:
        raise ValueError(str(exc))


def cmd_optimize(args) -> int:
    try:
        config = _resolve_optimize_config(args)
    except ValueError as exc:
        return _fail(f"configuration: {exc}", EXIT_CONFIG)
    try:
        artifacts = run_optimization(config)
    except (BackendTransportError, BackendProtocolError) as exc:
        return _fail(f"backend: {exc}", EXIT_BACKEND)
    except (CorruptFileError, UnsupportedFormatError, OSError) as exc:
        return _fail(f"audio input: {exc}", EXIT_CONFIG)
    except OptimizationAborted as exc:
        return _fail(f"optimization: {exc}", EXIT_ABORTED)
    best = artifacts.result.best_score
    print(
        f"finished: {artifacts.result.n_evaluations} evaluations "
        f"({artifacts.result.stop_reason}), best s_final {best.s_final:.5f} "
        f"(s_target {best.s_target:.5f}, s_guide {best.s_guide:.5f})"
    )
    print(f"artifacts in {artifacts.output_dir}")
    return EXIT_OK


def cmd_apply(args) -> int:
    try:
        with open(args.params, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        return _fail(f"params file: {exc}", EXIT_CONFIG)
    except json.JSONDecodeError as exc:
        return _fail(f"params file is not valid JSON: {exc}", EXIT_CONFIG)
    try:
        params = FxParams.from_dict(payload)
    except ParamValidationError as exc:
        return _fail(f"params: {exc}", EXIT_CONFIG)
    try:
        source = load_wav(args.input)
    except (CorruptFileError, UnsupportedFormatError, OSError) as exc:
        return _fail(f"audio input: {exc}", EXIT_CONFIG)
    try:
        stages = _parse_stages(args.stages) if args.stages else ALL_STAGES
        rendered = apply_chain(source, params, stages)
    except ParamValidationError as exc:
        return _fail(f"stages: {exc}", EXIT_CONFIG)
    try:
        save_wav(rendered, args.output)
    except OSError as exc:
        return _fail(f"cannot write output: {exc}", EXIT_CONFIG)
    print(f"wrote {args.output}")
    return EXIT_OK


def cmd_report(args) -> int:
    run_path = args.run_path
    if os.path.isdir(run_path):
        trace_path = os.path.join(run_path, "trace.csv")
    else:
        trace_path = run_path
    run_dir = os.path.dirname(trace_path) or "."

    try:
        rows = read_trace_csv(trace_path)
    except OSError as exc:
        return _fail(f"trace: {exc}", EXIT_CONFIG)
    except ValueError as exc:
        return _fail(f"trace: {exc}", EXIT_CONFIG)

    stop_reason = "unknown (run.json missing)"
    run_json_path = os.path.join(run_dir, "run.json")
    if os.path.exists(run_json_path):
        try:
            with open(run_json_path, "r", encoding="utf-8") as fh:
                stop_reason = json.load(fh).get("stop_reason", stop_reason)
        except (OSError, json.JSONDecodeError):
            pass

    finals = [row["s_final"] for row in rows]
    best_idx = max(range(len(finals)), key=finals.__getitem__)
    print(f"evaluations: {len(rows)}")
    print(f"best s_final: {finals[best_idx]!r} at iteration {rows[best_idx]['iteration']}")
    print(f"stop reason: {stop_reason}")

    svg_path = args.svg or os.path.join(run_dir, "report.svg")
    _write_score_plot(rows, svg_path)
    print(f"plot: {svg_path}")
    return EXIT_OK


def _write_score_plot(rows, svg_path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    iterations = [row["iteration"] for row in rows]
    best = [row["best_so_far"] for row in rows]
    finals = [row["s_final"] for row in rows]

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(iterations, finals, ".", color="#999999", label="evaluation")
    ax.plot(iterations, best, "-", color="#1f77b4", label="best so far")
    ax.set_xlabel("evaluation")
    ax.set_ylabel("s_final")
    ax.legend()
    fig.tight_layout()
    fig.savefig(svg_path, format="svg")
    plt.close(fig)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "optimize":
        return cmd_optimize(args)
    if args.command == "apply":
        return cmd_apply(args)
    return cmd_report(args)


if __name__ == "__main__":
    sys.exit(main())
