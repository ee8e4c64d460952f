"""Command-line front door for solving scenarios and running learning sweeps.

Precedence for run settings is flags > config file > defaults. Every
value that affects a run's output lands in its manifest.json, including
the scenario text itself, so `learn --manifest <file>` reproduces the
run byte for byte without access to the original inputs.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime
failure.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import os
import sys
from pathlib import Path

import click
import yaml

from . import __version__
from .calibration import calibrate
from .engine import AggregateProfile, cost_report, edge_loads
from .learning import DEFAULT_EPS0, DEFAULT_EPS_MIN, DEFAULT_Q_INIT, EpisodeConfig, run_episode
from .metrics import (
    DEFAULT_WINDOW,
    aggregate_runs,
    disparity_series,
    parse_ratio,
    pol_at,
    resolve_alphas,
    smooth,
    write_aggregate_csv,
    write_seed_csv,
)
from .network import Network, check_network, validate_network
from .scenarios import (
    BUILTIN_SCENARIOS,
    ScenarioError,
    network_to_document,
    parse_scenario,
    resolve_scenario,
)
from .solvers import SolverError, price_of_anarchy, social_optimum, worst_nash

OUT_ROOT_ENV = "ROUTEGAME_RUNS"

USAGE_ERROR = 1
RUNTIME_ERROR = 2


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _scenario_text(ref: str) -> tuple[str, str]:
    """Resolve a scenario ref to (name, scn document text)."""
    if ref in BUILTIN_SCENARIOS:
        net = resolve_scenario(ref)
        return ref, yaml.safe_dump(network_to_document(net), sort_keys=False)
    path = Path(ref)
    if not path.exists():
        raise ScenarioError(
            f"{ref!r} is neither a built-in scenario nor an existing file"
        )
    return path.stem, path.read_text(encoding="utf-8")


def _load_net(ref: str) -> tuple[str, str, Network]:
    name, text = _scenario_text(ref)
    return name, text, parse_scenario(text, origin=ref)


def _out_root(explicit: str | None) -> Path:
    if explicit:
        return Path(explicit)
    return Path(os.environ.get(OUT_ROOT_ENV, "runs"))


@click.group()
@click.version_option(version=__version__, prog_name="routegame")
def main() -> None:
    """Routing-game solvers and learning experiments."""


# ------------------------------------------------------------------ validate


@main.command()
@click.option("--scenario", required=True, help="Built-in name or .scn file path.")
def validate(scenario: str) -> None:
    """Parse a scenario and report every constraint violation."""
    try:
        name, text = _scenario_text(scenario)
        net = parse_scenario(text, origin=scenario, check=False)
    except (ScenarioError, OSError) as exc:
        _fail(USAGE_ERROR, str(exc))
    problems = validate_network(net)
    if problems:
        for p in problems:
            click.echo(f"invalid: {p}")
        sys.exit(USAGE_ERROR)
    click.echo(
        f"{name}: {len(net.nodes)} nodes, {len(net.edges)} edges, "
        f"{len(net.groups)} groups, {net.total_agents} agents"
    )
    for g in net.groups:
        click.echo(f"  {g.name}: {g.size} agents, {g.n_strategies} routes")


# --------------------------------------------------------------------- solve


def _flow_table(net: Network, prof: AggregateProfile) -> str:
    loads = edge_loads(net, prof)
    width = max(len(e.id) for e in net.edges)
    span = max(len(f"{e.src}->{e.dst}") for e in net.edges)
    lines = ["edge flows:"]
    for e in net.edges:
        x = loads[e.id]
        bar = "#" * max(0, round(40 * x / max(1, net.total_agents)))
        arrow = f"{e.src}->{e.dst}"
        lines.append(f"  {e.id:{width}s} {arrow:{span}s} {x:5d} {bar}")
    return "\n".join(lines)


def _equilibrium_text(label: str, res, net: Network) -> str:
    lines = [
        f"{label}: total cost {float(res.total_cost):.6g}"
        f" ({res.total_cost})"
        f"{'' if res.certified else '  [uncertified]'}"
    ]
    for g in net.groups:
        row = res.profile.group_row(g.name)
        avg = float(res.group_averages[g.name])
        lines.append(f"  {g.name}: counts {row} avg cost {avg:.6g}")
    return "\n".join(lines)


@main.command()
@click.option("--scenario", required=True, help="Built-in name or .scn file path.")
@click.option("--restarts", default=16, show_default=True, help="Equilibrium multi-start count.")
@click.option("--seed", default=0, show_default=True, help="Seed for randomized starts.")
@click.option("--flows/--no-flows", default=False, help="Also print per-edge flows at the worst equilibrium.")
@click.option("--allow-uncertified", is_flag=True, help="Accept a local-search optimum when enumeration is infeasible.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Also write the report to a file.")
def solve(scenario: str, restarts: int, seed: int, flows: bool, allow_uncertified: bool, out: str | None) -> None:
    """Worst equilibrium, social optimum, price of anarchy, disparity."""
    try:
        name, _, net = _load_net(scenario)
        check_network(net)
    except (ScenarioError, ValueError, OSError) as exc:
        _fail(USAGE_ERROR, str(exc))
    try:
        ne = worst_nash(net, restarts=restarts, seed=seed)
        so = social_optimum(net)
    except SolverError as exc:
        _fail(RUNTIME_ERROR, str(exc))
    if not so.certified and not allow_uncertified:
        _fail(
            RUNTIME_ERROR,
            "social optimum is not certified (profile space exceeds the "
            "enumeration budget); pass --allow-uncertified to accept it",
        )
    poa = price_of_anarchy(ne, so)
    names = [g.name for g in net.groups]
    lines = [f"scenario {name}"]
    lines.append(_equilibrium_text("worst equilibrium", ne, net))
    lines.append(_equilibrium_text("social optimum", so, net))
    lines.append(f"price of anarchy: {float(poa):.6g} ({poa})")
    if len(names) == 2:
        gap = ne.group_averages[names[0]] - ne.group_averages[names[1]]
        lines.append(
            f"disparity {names[0]}-{names[1]} at worst equilibrium: {float(gap):+.6g}"
        )
    if flows:
        lines.append(_flow_table(net, ne.profile))
    text = "\n".join(lines)
    click.echo(text)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")


# ------------------------------------------------------------------- analyze


@main.command()
@click.option("--scenario", required=True, help="Built-in name or .scn file path.")
@click.option(
    "--counts",
    required=True,
    help="Profile as group=c1,c2,... pairs joined by ';' "
    "(example: West=10,90;East=0,100).",
)
def analyze(scenario: str, counts: str) -> None:
    """Cost report (loads, strategy costs, averages) for a given profile."""
    try:
        name, _, net = _load_net(scenario)
        check_network(net)
        rows = {}
        for part in counts.split(";"):
            group, _, vec = part.partition("=")
            if not vec:
                raise ValueError(f"malformed counts segment {part!r}")
            rows[group.strip()] = tuple(int(v) for v in vec.split(","))
        prof = AggregateProfile.from_counts(net, rows)
        report = cost_report(net, prof)
    except (ScenarioError, ValueError, OSError) as exc:
        _fail(USAGE_ERROR, str(exc))
    click.echo(f"scenario {name}")
    click.echo(report.to_text(net))


# --------------------------------------------------------------------- learn


_LEARN_DEFAULTS = {
    "steps": 10_000,
    "seeds": 40,
    "master_seed": 0,
    "alpha": None,
    "alpha_mean": None,
    "alpha_ratio": None,
    "gamma": 0.0,
    "eps0": DEFAULT_EPS0,
    "eps_min": DEFAULT_EPS_MIN,
    "tau": None,
    "window": DEFAULT_WINDOW,
    "jobs": 1,
    "allow_uncertified": False,
}


def _merge_config(config_path: str | None, flags: dict) -> dict:
    """defaults <- config file <- explicitly set flags."""
    merged = dict(_LEARN_DEFAULTS)
    if config_path:
        raw = yaml.safe_load(Path(config_path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ValueError(f"config file {config_path} must hold a mapping")
        unknown = set(raw) - set(_LEARN_DEFAULTS) - {"scenario"}
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        merged.update(raw)
    merged.update({k: v for k, v in flags.items() if v is not None})
    return merged


def _resolve_alpha_mode(cfg: dict, n_groups: int) -> tuple[dict, tuple[float, ...]]:
    """Returns (manifest alpha_mode entry, per-group alphas)."""
    alpha, mean, ratio = cfg["alpha"], cfg["alpha_mean"], cfg["alpha_ratio"]
    if alpha is not None and (mean is not None or ratio is not None):
        raise ValueError("--alpha excludes --alpha-mean/--alpha-ratio")
    if alpha is not None:
        return {"kind": "uniform", "value": alpha}, (float(alpha),) * n_groups
    if mean is None or ratio is None:
        raise ValueError("need either --alpha or both --alpha-mean and --alpha-ratio")
    if n_groups != 2:
        raise ValueError(f"ratio mode needs exactly 2 groups, scenario has {n_groups}")
    r = parse_ratio(str(ratio))
    alphas = resolve_alphas(float(mean), r)
    return (
        {
            "kind": "ratio",
            "mean": float(mean),
            "ratio": str(ratio),
            "resolved": list(alphas),
        },
        alphas,
    )


def _ratio_label(mode: dict) -> str:
    if mode["kind"] == "uniform":
        return "uniform"
    r = parse_ratio(str(mode["ratio"]))
    return f"{r.numerator}to{r.denominator}"


def _run_one_seed(args) -> tuple[int, object]:
    game_doc, cfg_dict, seed = args
    net = parse_scenario(game_doc)
    cfg = EpisodeConfig(**cfg_dict, seed_index=seed)
    return seed, run_episode(net, cfg)


def _execute_learn(manifest: dict, run_dir: Path, jobs: int) -> None:
    """Run every seed recorded in a manifest and write the run directory.

    The manifest alone pins the output: scenario text, all learning
    parameters, seed list and the optimum used for the loss ratio.
    """
    net = parse_scenario(manifest["scenario"]["text"], origin=manifest["scenario"]["name"])
    check_network(net)
    cfg_dict = dict(
        steps=manifest["steps"],
        alphas=tuple(manifest["alphas"]),
        gamma=manifest["gamma"],
        eps0=manifest["eps0"],
        eps_min=manifest["eps_min"],
        tau=manifest["tau"],
        q_init=tuple(manifest["q_init"]),
        master_seed=manifest["master_seed"],
    )
    EpisodeConfig(**cfg_dict).validate(net)
    so_cost = float(manifest["so_cost"])
    seeds = list(manifest["seed_list"])
    run_dir.mkdir(parents=True, exist_ok=True)

    doc = manifest["scenario"]["text"]
    results: dict[int, object] = {}
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            for seed, res in pool.map(
                _run_one_seed, [(doc, cfg_dict, s) for s in seeds]
            ):
                results[seed] = res
    else:
        for s in seeds:
            _, res = _run_one_seed((doc, cfg_dict, s))
            results[s] = res

    # single collector: write per-seed files and the aggregate in seed order
    run_id = manifest["run_id"]
    window = manifest["window"]
    social_runs, pol_runs, sd_runs = [], [], []
    for s in seeds:
        res = results[s]
        write_seed_csv(run_dir / f"seed_{s}.csv", run_id, s, res, so_cost)
        social_runs.append(smooth(res.social, window))
        pol_runs.append(smooth(pol_at(res.social, so_cost), window))
        sd_runs.append(smooth(disparity_series(res), window))
    write_aggregate_csv(
        run_dir / "aggregate.csv",
        aggregate_runs(social_runs),
        aggregate_runs(pol_runs),
        aggregate_runs(sd_runs),
        window,
    )
    (run_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


_SO_CACHE: dict[str, tuple[float, bool]] = {}


def _so_for(text: str, allow_uncertified: bool) -> tuple[float, bool]:
    key = hashlib.sha256(text.encode()).hexdigest()
    if key not in _SO_CACHE:
        so = social_optimum(parse_scenario(text))
        _SO_CACHE[key] = (float(so.total_cost), so.certified)
    cost, certified = _SO_CACHE[key]
    if not certified and not allow_uncertified:
        raise SolverError(
            "social optimum is not certified; rerun with --allow-uncertified "
            "to compute loss ratios against the local-search value"
        )
    return cost, certified


def _build_manifest(
    scenario_ref: str, cfg: dict, ratio_override: str | None = None,
    master_seed_override: int | None = None,
) -> tuple[dict, Path]:
    """Assemble the manifest for one learn run; returns (manifest, run subdir)."""
    name, text, net = _load_net(scenario_ref)
    check_network(net)
    if ratio_override is not None:
        cfg = dict(cfg, alpha=None, alpha_ratio=ratio_override)
    mode, alphas = _resolve_alpha_mode(cfg, len(net.groups))
    master_seed = int(
        cfg["master_seed"] if master_seed_override is None else master_seed_override
    )

    so_cost, so_certified = _so_for(text, bool(cfg["allow_uncertified"]))
    steps = int(cfg["steps"])
    tau = float(cfg["tau"]) if cfg["tau"] is not None else max(steps / 5.0, 1.0)
    label = _ratio_label(mode)
    manifest = {
        "format": "routegame-manifest/1",
        "run_id": f"{name}-{label}-m{master_seed}",
        "scenario": {
            "name": name,
            "sha256": hashlib.sha256(text.encode()).hexdigest(),
            "text": text,
        },
        "steps": steps,
        "seed_list": list(range(int(cfg["seeds"]))),
        "master_seed": master_seed,
        "alpha_mode": mode,
        "alphas": list(alphas),
        "gamma": float(cfg["gamma"]),
        "eps0": float(cfg["eps0"]),
        "eps_min": float(cfg["eps_min"]),
        "tau": tau,
        "q_init": list(DEFAULT_Q_INIT),
        "window": int(cfg["window"]),
        "so_cost": repr(so_cost),
        "so_certified": so_certified,
        "numeric_mode": "exact-scaled-int",
        "version": __version__,
    }
    return manifest, Path(name) / label


_learn_options = [
    click.option("--scenario", default=None, help="Built-in name or .scn file path."),
    click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None, help="YAML config file; flags override its values."),
    click.option("--steps", type=int, default=None, help="Learning steps per seed."),
    click.option("--seeds", type=int, default=None, help="Number of seeds (seed indices 0..n-1)."),
    click.option("--master-seed", type=int, default=None, help="Master seed shared by all seeds."),
    click.option("--alpha", type=float, default=None, help="One learning rate for every group."),
    click.option("--alpha-mean", type=float, default=None, help="Mean learning rate for ratio mode."),
    click.option("--alpha-ratio", default=None, help="first:second group rate ratio, e.g. 5:1."),
    click.option("--gamma", type=float, default=None, help="Discount factor."),
    click.option("--eps0", type=float, default=None, help="Initial exploration rate."),
    click.option("--eps-min", type=float, default=None, help="Exploration floor."),
    click.option("--tau", type=float, default=None, help="Exploration decay constant (default steps/5)."),
    click.option("--window", type=int, default=None, help="Trailing smoothing window for the aggregate."),
    click.option("--out", default=None, help=f"Output root (default ${OUT_ROOT_ENV} or ./runs)."),
    click.option("--jobs", type=int, default=None, help="Worker processes for seeds."),
    click.option("--allow-uncertified", is_flag=True, default=None, help="Accept a local-search optimum for loss ratios."),
]


def _with_learn_options(fn):
    for opt in reversed(_learn_options):
        fn = opt(fn)
    return fn


@main.command()
@_with_learn_options
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False), default=None, help="Re-execute a recorded run exactly.")
def learn(manifest_path: str | None, config_path: str | None, scenario: str | None, out: str | None, **flags) -> None:
    """Q-learning episodes across seeds; writes CSVs plus a manifest."""
    jobs = flags.pop("jobs", None)
    try:
        if manifest_path:
            manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
            if manifest.get("format") != "routegame-manifest/1":
                raise ValueError(f"{manifest_path} is not a run manifest")
            digest = hashlib.sha256(manifest["scenario"]["text"].encode()).hexdigest()
            if digest != manifest["scenario"]["sha256"]:
                raise ValueError("manifest scenario text does not match its hash")
            label = _ratio_label(manifest["alpha_mode"])
            subdir = Path(manifest["scenario"]["name"]) / label
        else:
            cfg = _merge_config(config_path, flags)
            scenario = scenario or cfg.get("scenario")
            if scenario is None:
                raise ValueError("either --scenario, --manifest or a config "
                                 "file with a scenario entry is required")
            manifest, subdir = _build_manifest(scenario, cfg)
    except (ScenarioError, ValueError, OSError, KeyError) as exc:
        _fail(USAGE_ERROR, f"{exc}")
    except SolverError as exc:
        _fail(RUNTIME_ERROR, str(exc))

    run_dir = _out_root(out) / subdir
    n_jobs = int(jobs) if jobs else 1
    try:
        _execute_learn(manifest, run_dir, n_jobs)
    except (OSError, RuntimeError, ValueError) as exc:
        _fail(RUNTIME_ERROR, str(exc))
    click.echo(f"wrote {len(manifest['seed_list'])} seed files to {run_dir}")


# --------------------------------------------------------------------- sweep


@main.command()
@_with_learn_options
@click.option(
    "--ratios",
    required=True,
    help="Comma-separated rate ratios, e.g. 5:1,2:1,1:1,1:2,1:5.",
)
def sweep(config_path: str | None, scenario: str | None, out: str | None, ratios: str, **flags) -> None:
    """One learn run per ratio; master seed varies as seed XOR index."""
    jobs = flags.pop("jobs", None)
    try:
        cfg = _merge_config(config_path, flags)
        scenario = scenario or cfg.get("scenario")
        if scenario is None:
            raise ValueError("--scenario is required")
        if cfg["alpha"] is not None:
            raise ValueError("sweep uses --alpha-mean/--alpha-ratio; --alpha is fixed-rate")
        if cfg["alpha_mean"] is None:
            raise ValueError("--alpha-mean is required for a ratio sweep")
        ratio_list = [r.strip() for r in ratios.split(",") if r.strip()]
        if not ratio_list:
            raise ValueError("empty ratio list")
        plans = []
        for k, ratio in enumerate(ratio_list):
            manifest, subdir = _build_manifest(
                scenario, cfg, ratio_override=ratio,
                master_seed_override=int(cfg["master_seed"]) ^ k,
            )
            plans.append((manifest, subdir))
    except (ScenarioError, ValueError, OSError) as exc:
        _fail(USAGE_ERROR, f"{exc}")
    except SolverError as exc:
        _fail(RUNTIME_ERROR, str(exc))

    n_jobs = int(jobs) if jobs else 1
    root = _out_root(out)
    try:
        for manifest, subdir in plans:
            _execute_learn(manifest, root / subdir, n_jobs)
            click.echo(f"ratio {manifest['alpha_mode']['ratio']}: wrote {root / subdir}")
    except (OSError, RuntimeError, ValueError) as exc:
        _fail(RUNTIME_ERROR, str(exc))


# ----------------------------------------------------------------- calibrate


@main.command(name="calibrate")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write the residual report to a file.")
@click.option("--beam-a", default=3000, show_default=True, help="Phase A survivors.")
@click.option("--beam-b", default=6000, show_default=True, help="Phase B survivors.")
@click.option("--finalists", default=24, show_default=True, help="Finalists re-solved canonically.")
def calibrate_cmd(out: str | None, beam_a: int, beam_b: int, finalists: int) -> None:
    """Fit the ring-road timing table to the published observations."""
    try:
        result = calibrate(beams=(beam_a, beam_b, finalists), log=click.echo)
    except RuntimeError as exc:
        _fail(RUNTIME_ERROR, str(exc))
    click.echo(result.report)
    if out:
        Path(out).write_text(result.report, encoding="utf-8")


if __name__ == "__main__":
    main()
