"""Command line front end.

Exit codes: 0 success, 1 unexpected error, 2 configuration or usage error,
3 finished but the sampling loop hit its iteration cap without meeting the
termination test.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiments as ex
from . import gmm as gm
from . import objectworld as ow
from .exceptions import ConfigError
from .robustness import candidate_evd


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sirl",
        description="Distribution-valued reward recovery on gridworld benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser(
        "gen-world", help="generate a world with demos and write its artifacts"
    )
    gen.add_argument("--config", required=True, help="INI experiment config")
    gen.add_argument("--out", required=True, help="output directory")

    rec = sub.add_parser(
        "recovery", help="recover rewards from demos with the configured methods"
    )
    rec.add_argument("--config", required=True, help="INI experiment config")
    rec.add_argument("--out", required=True, help="output directory")
    rec.add_argument(
        "--method", choices=[*ex.METHODS, "all"], default="all",
        help="run a single method instead of the configured list",
    )
    rec.add_argument("--seed", type=int, default=None, help="override learner seeds")
    rec.add_argument(
        "--resume", action="store_true",
        help="continue from an existing sirl_state.json in the output directory",
    )

    rob = sub.add_parser(
        "robustness", help="draw a diverse near-optimal solution set from a mixture"
    )
    rob.add_argument("--config", required=True, help="INI experiment config")
    rob.add_argument("--gmm", required=True, help="mixture file from a recovery run")
    rob.add_argument("--out", required=True, help="output directory")

    sw = sub.add_parser("sweep", help="sensitivity sweep over demo axes")
    sw.add_argument("--config", required=True, help="INI experiment config")
    sw.add_argument("--out", required=True, help="output directory")
    sw.add_argument("--seed", type=int, default=None, help="override learner seeds")
    sw.add_argument(
        "--full-scale", action="store_true",
        help="use the large benchmark axes instead of the configured ones",
    )

    ev = sub.add_parser(
        "eval-evd", help="expected value difference of a weight file on the world"
    )
    ev.add_argument("--config", required=True, help="INI experiment config")
    group = ev.add_mutually_exclusive_group(required=True)
    group.add_argument("--weights", help="text file with one weight per line")
    group.add_argument("--gmm", help="mixture file; its overall mean is evaluated")

    return parser


def cmd_gen_world(args) -> int:
    config = ex.load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    instance, mdp, features = ex.build_world(config)
    demos = ow.generate_demos(
        instance, config.demos.n_demos, config.demos.trajectory_length,
        config.demos.seed,
    )
    ow.save_instance(out / "world.txt", instance)
    ex.write_demos_csv(out / "demos.csv", demos)
    ex.write_grid_csv(out / "true_reward.csv", mdp.reward, instance.grid_size)
    from .mdp import value_iteration

    ex.write_grid_csv(
        out / "true_value.csv", value_iteration(mdp)[0], instance.grid_size
    )
    print(f"world: {instance.grid_size}x{instance.grid_size}, "
          f"{instance.objects.shape[0]} objects, {features.shape[1]} features")
    print(f"demos: {demos.n_demos} x {demos.trajectory_length} steps")
    print(f"wrote {out}")
    return 0


def cmd_recovery(args) -> int:
    config = ex.load_config(args.config)
    if args.seed is not None:
        config = ex.with_seed(config, args.seed)
    methods = config.methods if args.method == "all" else (args.method,)
    outcome = ex.run_recovery(config, args.out, methods=methods, resume=args.resume)
    status = 0
    for result in outcome.results:
        print(f"{result.method}: evd={result.evd!r} "
              f"iterations={result.n_iterations} converged={result.converged}")
        if result.method == "sirl" and not result.converged:
            status = 3
    print(f"wrote {args.out}")
    return status


def cmd_robustness(args) -> int:
    config = ex.load_config(args.config)
    mixture = gm.load_gmm(args.gmm)
    solution = ex.run_robustness(config, mixture, args.out)
    print(f"solution set: {solution.n_found} of {config.robustness.n} members "
          f"after {solution.n_draws} draws")
    if not solution.complete:
        print("warning: candidate pool exhausted before the set was complete",
              file=sys.stderr)
    print(f"wrote {args.out}")
    return 0


def cmd_sweep(args) -> int:
    config = ex.load_config(args.config)
    if args.seed is not None:
        config = ex.with_seed(config, args.seed)
    cells = ex.run_sweep(config, args.out, full_scale=args.full_scale)
    n_failed = sum(1 for cell in cells if cell.status != "ok")
    print(f"sweep: {len(cells)} cells, {n_failed} failed")
    print(f"wrote {args.out}")
    return 0


def cmd_eval_evd(args) -> int:
    config = ex.load_config(args.config)
    _, mdp, features = ex.build_world(config)
    if args.weights:
        weights = ex.load_weights(args.weights)
    else:
        weights = gm.mixture_mean(gm.load_gmm(args.gmm))
    if weights.shape != (features.shape[1],):
        raise ConfigError(
            f"expected {features.shape[1]} weights, got {weights.shape[0]}"
        )
    print(repr(candidate_evd(weights, mdp, features)))
    return 0


_DISPATCH = {
    "gen-world": cmd_gen_world,
    "recovery": cmd_recovery,
    "robustness": cmd_robustness,
    "sweep": cmd_sweep,
    "eval-evd": cmd_eval_evd,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _DISPATCH[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # surface anything else as a plain failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
