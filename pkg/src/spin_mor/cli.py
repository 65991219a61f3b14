"""
Command-line experiment runner.

Every experiment is a subcommand reading a JSON config (``--config``) whose
keys may be overridden by flags of the same name. Results are written to
``--out`` as CSV tables and JSON documents together with a run manifest;
passing the manifest back as ``--config`` repeats the run.

Exit codes: 0 on success, 2 on a configuration error (nothing written),
3 on numerical non-convergence.
"""

import argparse
import json
import logging
import sys
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .compressive.dictionary import build_dictionary, gaussian_dictionary
from .compressive.recovery import breakdown_sweep, gaussian_rip_median, rip_report, sampling_bound
from .core.gk_manifold import random_gk_state, tangent_frame
from .core.measurement import make_pair
from .core.spin_algebra import coherent_state, make_spin_ops, parse_spin
from .processing.mor import project
from .processing.mrfm import FULL_DURATION, MrfmConfig, filtered_distribution_test, run_mrfm, unraveling_sweep
from .processing.spin_dust import dust_state, run_dust_experiment
from .processing.trajectory import SimulationConfig, einselection_tracker, run_ensemble, t1_time
from .theory.calibration import calibrate_bloch, calibrate_observation, calibrate_test_mass, quantum_limit_report
from .theory.geometry import analytic_curvature, curvature
from .theory.thermal import ThermalSpec, thermal_density, thermal_pairs
from .utils.io import run_manifest, write_csv, write_json
from .utils.validation import ConvergenceError, trace_distance

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3

DEFAULTS: Dict[str, Dict[str, Any]] = {
    'curvature': {
        'kind': 'slater', 'n': 2, 'norb': 4, 'spins': [0.5, 0.5],
        'order': 3, 'rank': 2, 'd': 2, 'metric': 'flat',
    },
    'project': {
        'order': 6, 'rank': 9, 'd': 2, 'n_targets': 10, 'offset': 0.0,
        'max_iter': 500, 'tol': 1e-8,
    },
    'simulate': {
        'j': 0.5, 'tuning': 'synoptic', 'theta': 0.1, 'axes': [3], 'initial': 'x',
        'dt': 1.0, 'n_steps': 1000, 'n_traj': 100, 'sample_every': 10,
    },
    'thermal': {
        'j': 0.5, 'beta': 1.0, 'theta': 0.1, 'axis': [0.0, 0.0, 1.0], 'branch': 'small',
        'n_traj': 1000, 't_end': 10.0, 'dt': 1.0,
    },
    'calibrate': {
        'mode': 'bloch', 'gx': 1.0, 'gy': 1.0, 'gz': 1.5, 'beta': 1.0, 'eps_max': 0.1,
        'branch': 'small', 'output_rate': None, 'q': 100.0, 'omega0': 1.0,
        'kind': 'spin_z', 'noise_psd': 1.0, 'k': 1.0, 'j': 0.5,
    },
    'mrfm': {
        'unraveling': 'all', 'duration': 60.0, 'n_traj': 8, 'dt': 7.1e-3,
        'theta_xy': 0.093, 'theta_z': 0.026, 'filter_tau': 0.76, 'full': False,
    },
    'dust': {
        'n_spin': 6, 'ranks': [1, 2, 5], 'tuning': 'synoptic', 't_burn': 100.0,
        'n_samples': 30, 'dt': 0.1, 'theta': 0.1, 'spacing': 1.0, 'metric_pairs': 0,
        'max_iter': 500,
    },
    'cs-sweep': {
        'n_spin': 8, 'rank': 1, 'n_values': None, 'n_seeds': 3, 'target': 'dust',
        'tuning': 'synoptic', 'duration': 20.0, 'max_iter': 200,
    },
    'rip': {
        'dict': 'tetra', 'chars': 3, 'code': 'parity', 'j': 0.5, 'sparsity': [1, 2, 3],
        'mode': 'exhaustive', 'n_samples': 1000, 'gaussian_n': 8, 'gaussian_p': 16,
        'n_matrices': 11,
    },
}


@dataclass
class Outcome:
    """Artifacts and console summary of one run."""

    tables: Dict[str, List[Dict]] = field(default_factory=dict)
    documents: Dict[str, Any] = field(default_factory=dict)
    summary: List[str] = field(default_factory=list)
    converged: bool = True


def derive_seed(seed: int, *labels) -> int:
    """Integer seed of a labeled sub-stream of the run seed."""
    words = [int(seed)] + [zlib.crc32(str(l).encode()) if isinstance(l, str) else int(l) for l in labels]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


# Configuration -----------------------------------------------------------------


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ('1', 'true', 'yes'):
        return True
    if lowered in ('0', 'false', 'no'):
        return False
    raise argparse.ArgumentTypeError(f"Expected a boolean, got '{text}'")


def _flag_type(default: Any) -> Callable[[str], Any]:
    if isinstance(default, bool):
        return _parse_bool
    if isinstance(default, (int, float, str)):
        return type(default)
    return json.loads


def _check_types(command: str, params: Dict[str, Any]):
    for key, value in params.items():
        default = DEFAULTS[command][key]
        if default is None or value is None:
            continue
        if isinstance(default, bool):
            ok = isinstance(value, bool)
        elif isinstance(default, float):
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        elif isinstance(default, int):
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif isinstance(default, str):
            ok = isinstance(value, str)
        else:
            ok = isinstance(value, (list, int, float))
        if not ok:
            raise ValueError(f"Config key '{key}' of '{command}' has invalid value {value!r}")


def resolve_config(args: argparse.Namespace) -> Dict[str, Any]:
    """
    Merge defaults, the config document and flags, in that order.

    Raises:
        ValueError: On unknown keys, wrong value types or an unreadable document
    """
    command = args.command
    params = dict(DEFAULTS[command])
    seed = 0

    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ValueError(f"Config file not found: {path}")
        try:
            document = json.loads(path.read_text(encoding='utf-8'))
        except json.JSONDecodeError as e:
            raise ValueError(f"Config {path} is not valid JSON: {e}") from e
        if not isinstance(document, dict):
            raise ValueError(f"Config {path} must be a JSON object")

        if 'parameters' in document and 'command' in document:
            if document['command'] != command:
                raise ValueError(f"Manifest is for '{document['command']}', not '{command}'")
            seed = document.get('seed', 0)
            document = document['parameters']
        else:
            document = dict(document)
            seed = document.pop('seed', 0)

        unknown = sorted(set(document) - set(params))
        if unknown:
            raise ValueError(f"Unknown config keys for '{command}': {', '.join(unknown)}")
        params.update(document)

    for key in DEFAULTS[command]:
        value = getattr(args, key, None)
        if value is not None:
            params[key] = value

    _check_types(command, params)
    params['seed'] = int(args.seed if args.seed is not None else seed)
    return params


# Subcommands -------------------------------------------------------------------


def _run_curvature(p: Dict, workers: int) -> Outcome:
    kind, metric, seed = p['kind'], p['metric'], p['seed']
    analytic, formula = None, None

    if kind == 'slater':
        n, n_orb = int(p['n']), int(p['norb'])
        state = random_gk_state(n, 1, n_orb, seed=seed, antisymmetric=True)
        report = curvature(state, metric)
        if metric == 'fubini_study':
            analytic = analytic_curvature('slater_fubini_study', n=n, n_orb=n_orb)
        else:
            coef = 2 * n * (n - 1) * (n_orb - n) * (n_orb - n - 1)
            analytic = analytic_curvature('slater', kappa=report.kappa, n=n, n_orb=n_orb)
            formula = f"-{coef}/kappa"
    elif kind == 'rank1':
        spins = [parse_spin(j) for j in p['spins']]
        dims = [int(round(2 * j)) + 1 for j in spins]
        state = random_gk_state(len(dims), 1, dims, seed=seed)
        report = curvature(state, metric)
        if metric == 'flat':
            analytic = analytic_curvature('rank1', kappa=report.kappa, spins=spins)
    elif kind == 'random':
        state = random_gk_state(int(p['order']), int(p['rank']), int(p['d']), seed=seed)
        report = curvature(state, metric)
    else:
        raise ValueError(f"Unknown curvature kind '{kind}'. Available: slater, rank1, random")

    document = report.to_dict()
    document.update({'kind': kind, 'analytic': analytic, 'formula': formula})
    line = f"scalar curvature = {report.scalar:.12g} (kappa = {report.kappa:.12g})"
    if analytic is not None:
        line += f"; analytic {formula + ' = ' if formula else ''}{analytic:.12g}"
    return Outcome(
        tables={'ricci_eigenvalues.csv': [
            {'index': i, 'eigenvalue': float(x)} for i, x in enumerate(report.ricci_eigenvalues)
        ]},
        documents={'curvature.json': document},
        summary=[line],
    )


def _run_project(p: Dict, workers: int) -> Outcome:
    order, rank, d, seed = int(p['order']), int(p['rank']), int(p['d']), p['seed']
    offset = float(p['offset'])
    rows = []
    for t in range(int(p['n_targets'])):
        if offset > 0:
            anchor = random_gk_state(order, rank, d, seed=[seed, t, 0])
            frame = tangent_frame(anchor)
            rng = np.random.default_rng([seed, t, 2])
            v = rng.standard_normal(anchor.dim) + 1j * rng.standard_normal(anchor.dim)
            normal = frame.project_normal(v)
            target = frame.psi + offset * normal / np.linalg.norm(normal)
        else:
            rng = np.random.default_rng([seed, t, 2])
            target = rng.standard_normal(d ** order) + 1j * rng.standard_normal(d ** order)
            target /= np.linalg.norm(target)

        init = random_gk_state(order, rank, d, seed=[seed, t, 1])
        result = project(target, init, max_iter=int(p['max_iter']), tol=float(p['tol']))
        rows.append({
            'target': t,
            'distance': result.distance,
            'fidelity': result.fidelity,
            'iterations': result.iterations,
            'converged': result.converged,
            'residual': result.residual,
        })

    distances = np.array([r['distance'] for r in rows])
    summary = [
        f"median distance {np.median(distances):.6g}, max {distances.max():.6g}, "
        f"{sum(r['converged'] for r in rows)}/{len(rows)} converged"
    ]
    if offset > 0:
        hits = int(np.sum(np.abs(distances - offset) <= 1e-3))
        summary.append(f"offset {offset}: {hits}/{len(rows)} recovered the anchor")
    return Outcome(
        tables={'project.csv': rows},
        documents={'project.json': {'median_distance': np.median(distances), 'max_distance': distances.max()}},
        summary=summary,
        converged=all(r['converged'] for r in rows),
    )


def _run_simulate(p: Dict, workers: int) -> Outcome:
    rep = make_spin_ops(p['j'])
    axes = p['axes'] if isinstance(p['axes'], list) else [p['axes']]
    pairs = [(0, make_pair(rep, p['tuning'], float(p['theta']), axis=int(a))) for a in axes]
    if p['initial'] == 'x':
        start = coherent_state(rep, [1.0, 0.0, 0.0]).amplitudes
    elif p['initial'] == 'up':
        start = None
    else:
        raise ValueError(f"Unknown initial state '{p['initial']}'. Available: x, up")

    config = SimulationConfig(
        dims=[rep.dim],
        pairs=pairs,
        dt=float(p['dt']),
        n_steps=int(p['n_steps']),
        seed=p['seed'],
        initial_state=start,
        observables={'s1': rep.s1, 's2': rep.s2, 's3': rep.s3},
        sample_every=int(p['sample_every']),
    )
    ensemble = run_ensemble(config, int(p['n_traj']), workers=workers, keep_states=True)
    if len(axes) == 1:
        kind = 'uniaxial_variance'
        tracker = einselection_tracker(kind, ensemble, rep, generator=rep.ops[int(axes[0]) - 1])
    else:
        kind = 'triaxial_covariance'
        tracker = einselection_tracker(kind, ensemble, rep)

    rows = [
        {
            'time': float(t),
            's1': float(ensemble.observable_means['s1'][k]),
            's2': float(ensemble.observable_means['s2'][k]),
            's3': float(ensemble.observable_means['s3'][k]),
            's3_stderr': float(ensemble.stderr('s3')[k]),
            kind: float(tracker[k]),
        }
        for k, t in enumerate(ensemble.sample_times)
    ]
    return Outcome(
        tables={'simulate.csv': rows},
        documents={'simulate.json': config.get_info()},
        summary=[f"{kind}: {tracker[0]:.6g} -> {tracker[-1]:.6g} over {config.n_steps} steps"],
    )


def _run_thermal(p: Dict, workers: int) -> Outcome:
    j, beta, theta, dt = parse_spin(p['j']), float(p['beta']), float(p['theta']), float(p['dt'])
    axis = np.asarray(p['axis'], dtype=float)
    rep = make_spin_ops(j)
    t_s = axis[0] * rep.s1 + axis[1] * rep.s2 + axis[2] * rep.s3

    n_steps = int(np.ceil(float(p['t_end']) * t1_time(dt, theta) / dt))
    config = SimulationConfig(
        dims=[rep.dim],
        pairs=[(0, pair) for pair in thermal_pairs(j, beta, theta, axis, p['branch'])],
        dt=dt,
        n_steps=n_steps,
        seed=p['seed'],
        observables={'s_t': t_s},
        sample_every=max(1, n_steps // 50),
    )
    ensemble = run_ensemble(config, int(p['n_traj']), workers=workers)
    rho_th = thermal_density(ThermalSpec(j, beta, axis))
    expected = float(np.trace(rho_th @ t_s).real)

    rows = [
        {
            'time': float(t),
            'trace_distance': trace_distance(ensemble.rho_t[k], rho_th) if ensemble.rho_t is not None else None,
            's_t': float(ensemble.observable_means['s_t'][k]),
            's_t_stderr': float(ensemble.stderr('s_t')[k]),
        }
        for k, t in enumerate(ensemble.sample_times)
    ]
    final = rows[-1]
    return Outcome(
        tables={'thermal.csv': rows},
        documents={'thermal.json': {
            'final_trace_distance': final['trace_distance'],
            'final_s_t': final['s_t'],
            'final_s_t_stderr': final['s_t_stderr'],
            'equilibrium_s_t': expected,
            'n_steps': n_steps,
        }},
        summary=[
            f"<t.s> = {final['s_t']:.6g} +/- {final['s_t_stderr']:.2g} (equilibrium {expected:.6g}), "
            f"trace distance {final['trace_distance']}"
        ],
    )


def _run_calibrate(p: Dict, workers: int) -> Outcome:
    mode = p['mode']
    if mode == 'bloch':
        cal = calibrate_bloch(
            p['gx'], p['gy'], p['gz'], p['beta'], p['eps_max'], p['branch'], p['output_rate']
        )
        document = cal.to_dict()
    elif mode == 'test_mass':
        cal = calibrate_test_mass(p['beta'], p['q'], p['omega0'], p['eps_max'], p['branch'])
        document = {**cal.to_dict(), 'quantum_limit': quantum_limit_report(cal, p['k'])}
    elif mode == 'observation':
        cal = calibrate_observation(p['kind'], p['noise_psd'], p['k'], p['omega0'], p['j'], p['eps_max'])
        document = cal.to_dict()
        if cal.j_theta_sq is not None:
            document['quantum_limit'] = quantum_limit_report(cal)
    else:
        raise ValueError(f"Unknown calibration mode '{mode}'. Available: bloch, test_mass, observation")
    return Outcome(
        documents={'calibration.json': document},
        summary=[f"{mode}: click rate {cal.click_rate:.6g}"],
    )


def _run_mrfm(p: Dict, workers: int) -> Outcome:
    config = MrfmConfig(
        dt=float(p['dt']),
        theta_xy=float(p['theta_xy']),
        theta_z=float(p['theta_z']),
        duration=FULL_DURATION if p['full'] else float(p['duration']),
        filter_tau=float(p['filter_tau']),
        unraveling='batrachian' if p['unraveling'] == 'all' else p['unraveling'],
        seed=p['seed'],
    )
    n_traj = int(p['n_traj'])
    if p['unraveling'] == 'all':
        results = unraveling_sweep(config, n_traj=n_traj, workers=workers)
    else:
        results = {config.unraveling: run_mrfm(config, n_traj=n_traj, workers=workers)}

    document = {name: result.summary() for name, result in results.items()}
    names = list(results)
    document['ks_tests'] = [
        dict(zip(('first', 'second', 'statistic', 'pvalue'), (a, b, *filtered_distribution_test(results[a], results[b]))))
        for i, a in enumerate(names) for b in names[i + 1:]
    ]
    summary = [
        f"{name}: ms quantum {result.ms_quantum:.4f}, dwell mean {result.quantum_stats.get('dwell_mean', float('nan')):.4g} s"
        for name, result in results.items()
    ]
    return Outcome(
        tables={f'mrfm_{name}.csv': result.rows() for name, result in results.items()},
        documents={'mrfm.json': document},
        summary=summary,
    )


def _run_dust(p: Dict, workers: int) -> Outcome:
    ranks = p['ranks'] if isinstance(p['ranks'], list) else [p['ranks']]
    result = run_dust_experiment(
        int(p['n_spin']),
        [int(r) for r in ranks],
        tuning=p['tuning'],
        seed=p['seed'],
        t_burn=float(p['t_burn']),
        n_samples=int(p['n_samples']),
        dt=float(p['dt']),
        theta=float(p['theta']),
        spacing=float(p['spacing']),
        metric_pairs=int(p['metric_pairs']),
        max_iter=int(p['max_iter']),
    )
    medians = result.median_fidelity()
    tables = {'dust.csv': result.rows()}
    if result.metrics:
        tables['dust_metrics.csv'] = result.metrics
    return Outcome(
        tables=tables,
        documents={'dust.json': {'median_fidelity': medians, 'system': result.system_info}},
        summary=[f"rank {rank}: median fidelity {f:.4f}" for rank, f in medians.items()],
        converged=result.all_converged,
    )


def _run_cs_sweep(p: Dict, workers: int) -> Outcome:
    n_spin, rank, seed = int(p['n_spin']), int(p['rank']), p['seed']
    D = 2 ** n_spin
    if p['target'] == 'dust':
        psi0 = dust_state(n_spin, seed, tuning=p['tuning'], duration=float(p['duration']))
    elif p['target'] == 'random':
        rng = np.random.default_rng(derive_seed(seed, 'target'))
        psi0 = rng.standard_normal(D) + 1j * rng.standard_normal(D)
        psi0 /= np.linalg.norm(psi0)
    else:
        raise ValueError(f"Unknown target '{p['target']}'. Available: dust, random")

    n_values = p['n_values']
    if n_values is None:
        _, bound = sampling_bound(rank, D)
        n_values = sorted({int(np.clip(round(f * bound), 1, D)) for f in (0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0)})
    seeds = [derive_seed(seed, 'cs-sweep', s) for s in range(int(p['n_seeds']))]

    sweep = breakdown_sweep(psi0, rank, n_values, seeds, [2] * n_spin, max_iter=int(p['max_iter']), workers=workers)
    transition = sweep.transition()
    return Outcome(
        tables={'cs_sweep.csv': sweep.rows},
        documents={'cs_sweep.json': {
            'rank': rank,
            'sparsity': sweep.sparsity,
            'bound': sweep.bound,
            'median_fidelity': sweep.median_fidelity(),
            'transition': transition,
        }},
        summary=[f"sampling bound {sweep.bound:.1f}, fidelity transition at n = {transition}"],
        converged=sweep.all_converged,
    )


def _run_rip(p: Dict, workers: int) -> Outcome:
    if p['dict'] == 'tetra':
        X = build_dictionary(int(p['chars']), p['code'], p['j'])
    elif p['dict'] == 'gaussian':
        X = gaussian_dictionary(int(p['gaussian_n']), int(p['gaussian_p']), seed=derive_seed(p['seed'], 'dictionary'))
    else:
        raise ValueError(f"Unknown dictionary '{p['dict']}'. Available: tetra, gaussian")

    sparsities = p['sparsity'] if isinstance(p['sparsity'], list) else [p['sparsity']]
    rows, summary = [], []
    for S in sparsities:
        report = rip_report(
            X, int(S), p['mode'], int(p['n_samples']), seed=derive_seed(p['seed'], 'rip', S), workers=workers
        )
        row = report.to_dict()
        if p['dict'] == 'tetra':
            row['gaussian_median'] = gaussian_rip_median(
                X.n_rows, X.n_cols, int(S), int(p['n_matrices']), derive_seed(p['seed'], 'gaussian'),
                p['mode'], int(p['n_samples']),
            )
        rows.append(row)
        summary.append(f"S={S}: pass fraction {100 * report.fraction:.1f}%")
    return Outcome(
        tables={'rip.csv': rows},
        documents={'rip.json': {'dictionary': X.get_info(), 'reports': rows}},
        summary=summary,
    )


RUNNERS: Dict[str, Callable[[Dict, int], Outcome]] = {
    'curvature': _run_curvature,
    'project': _run_project,
    'simulate': _run_simulate,
    'thermal': _run_thermal,
    'calibrate': _run_calibrate,
    'mrfm': _run_mrfm,
    'dust': _run_dust,
    'cs-sweep': _run_cs_sweep,
    'rip': _run_rip,
}


# Entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help="JSON config or run manifest")
    common.add_argument('--seed', type=int, default=None, help="Run seed (default 0)")
    common.add_argument('--out', default='results', help="Output directory")
    common.add_argument('--workers', type=int, default=1, help="Worker threads")
    common.add_argument('-v', '--verbose', action='count', default=0, help="-v info, -vv debug")

    parser = argparse.ArgumentParser(
        prog='spin-mor',
        description="Open quantum spin trajectory simulation and model order reduction experiments",
    )
    sub = parser.add_subparsers(dest='command', required=True)
    for command, defaults in DEFAULTS.items():
        cmd = sub.add_parser(command, parents=[common], help=f"run the {command} experiment")
        for key, default in defaults.items():
            cmd.add_argument(
                f"--{key.replace('_', '-')}",
                dest=key,
                type=_flag_type(default),
                default=None,
                help=f"(default: {json.dumps(default)})",
            )
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')

    if args.workers < 1:
        print(f"error: --workers must be positive, got {args.workers}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        params = resolve_config(args)
        outcome = RUNNERS[args.command](params, args.workers)
    except (ConvergenceError, np.linalg.LinAlgError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out)
    written = []
    for name, rows in outcome.tables.items():
        write_csv(out / name, rows)
        written.append(name)
    for name, document in outcome.documents.items():
        write_json(out / name, document)
        written.append(name)
    parameters = {k: v for k, v in params.items() if k != 'seed'}
    write_json(out / 'manifest.json', run_manifest(args.command, params['seed'], parameters, written))

    for line in outcome.summary:
        print(line)
    logger.info(f"Wrote {len(written) + 1} files to {out}")

    if not outcome.converged:
        print("error: at least one result did not converge", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
