"""Run orchestration: offline stage, online increment loop with optional
refinement and rewinding, reference solves, and the update benchmark.

A run reads one configuration and fills one output directory:

* ``history.csv`` — homogenized response per increment.
* ``fields/`` — per-voxel dumps (acc_p, work_p, cluster labels) at the
  configured checkpoints and at the final increment.
* ``events.log`` — refinement events (adaptive runs only; carries
  wall-clock timings, the one nondeterministic artifact).
* ``benchmark.csv`` / ``timings.log`` — update-benchmark counts (exact,
  deterministic) and measured times (nondeterministic), cit-bench mode.
* ``manifest.txt`` — status, environment, file checksums, config echo;
  written last, also on failure with the partial file list.

All randomness (clustering restarts, scan offsets, split K-Means) derives
from the run seed through named child streams, so equal configuration and
seed reproduce every CSV and field dump bitwise.
"""

import os

import numpy as np

from crom import __version__
from crom.adaptivity import (adaptivity_step, inherit_states,
                             perform_rewind, rewind_trigger,
                             store_rewind_state)
from crom.cit import ConvolutionCache, assemble_matrix, benchmark_cit_update
from crom.clustering import base_clustering
from crom.config import serialize_config
from crom.oracle import (cluster_field_to_voxels,
                         elastic_concentration_features, solve_full_field)
from crom.outputs import (EVENTS_NAME, FIELDS_DIR, HISTORY_NAME,
                          MANIFEST_NAME, field_filename, history_row,
                          write_events, write_field, write_history_csv,
                          write_manifest)
from crom.rve import generate_rve, load_rve
from crom.solver import (ReducedSystem, advance_increment, check_fracture,
                         initial_reference)
from crom.spectral import VoxelGrid, assemble_green_operator


def resolve_grid(cfg):
    """-> (grid, achieved particle fraction or None)."""
    if cfg.rve_file is not None:
        return load_rve(cfg.rve_file), None
    if cfg.generator is None:
        raise ValueError("configuration has neither an RVE file nor a "
                         "generator")
    return generate_rve(cfg.generator)


def _check_materials(cfg, grid):
    for phase in grid.phases:
        if int(phase) not in cfg.materials:
            raise ValueError("no [material.%d] section for phase present "
                             "in the RVE" % phase)


def build_offline(cfg, grid):
    """Offline stage: features, clustering, reference, Green operator and
    interaction matrix, bundled into a ready ReducedSystem.

    Returns (system, features, green, cache, adaptivity rng).
    """
    _check_materials(cfg, grid)
    root = np.random.SeedSequence(cfg.seed)
    seed_cluster, seed_adapt = root.spawn(2)
    features = elastic_concentration_features(grid, cfg.materials,
                                              tol=cfg.oracle_tol)
    cmap = base_clustering(grid, features, cfg.clusters,
                           seed=seed_cluster, n_init=cfg.cluster_n_init,
                           mini_batch=cfg.mini_batch or None)
    reference = initial_reference(grid, cfg.materials, cfg.solver)
    green = assemble_green_operator(reference, grid)
    cache = ConvolutionCache()
    cit = assemble_matrix(cmap, green, cache=cache)
    system = ReducedSystem(cmap, cfg.materials, cit, reference)
    return system, features, green, cache, np.random.default_rng(seed_adapt)


def run_reduced(cfg, grid, adaptive):
    """Online increment loop of the reduced solver.

    Returns (history rows, events, dumps dict (name, increment) ->
    array, final system).
    """
    system, features, green, cache, rng = build_offline(cfg, grid)
    loading = cfg.loading_path()
    acfg = cfg.adaptivity if adaptive else None
    if adaptive and acfg is None:
        raise ValueError("adaptive run without adaptivity settings")
    checkpoints = set(cfg.checkpoints)
    history = []
    events = []
    dumps = {}
    rewind_snapshot = None
    rewinds_done = 0

    def solve_and_record(flags, deltas, m):
        info = advance_increment(system, flags, deltas, cfg.solver)
        fractured = bool(cfg.fracture is not None
                         and check_fracture(system, cfg.fracture))
        return history_row(m, system.total_strain, system.total_stress,
                           system.n_c, system.reference, fractured,
                           info["newton_iterations"],
                           info["sc_iterations"])

    m = 1
    while m <= loading.n_increments:
        flags, deltas = loading.increment(m - 1)
        pre = system.snapshot()
        pre_ids = system.cluster_ids
        history.append(solve_and_record(flags, deltas, m))

        if adaptive and cfg.rewind and rewind_snapshot is None \
                and rewind_trigger(system):
            rewind_snapshot = store_rewind_state(m, system, history)
            events.append({"kind": "store", "increment": m,
                           "n_c": system.n_c})

        if adaptive:
            split_here = False
            consecutive = 0
            while True:
                new_system, event = adaptivity_step(
                    system, green, features, acfg, rng, m,
                    consecutive=consecutive, cache=cache)
                if new_system is system:
                    break
                events.append(event)
                split_here = True
                consecutive += 1
                system = new_system
                if acfg.repeat_increment:
                    system.states = inherit_states(pre["states"], pre_ids,
                                                   system.cluster_map)
                    system.far_delta = pre["far_delta"].copy()
                    system.total_strain = pre["total_strain"].copy()
                    system.total_stress = pre["total_stress"].copy()
                    system.reference = pre["reference"]
                    history[-1] = solve_and_record(flags, deltas, m)
            if split_here and cfg.rewind and rewind_snapshot is not None \
                    and rewinds_done < cfg.rewind_limit \
                    and rewind_snapshot.increment < m:
                history = perform_rewind(system, rewind_snapshot)
                events.append({"kind": "rewind",
                               "to_increment": rewind_snapshot.increment,
                               "n_c": system.n_c})
                rewinds_done += 1
                for key in [k for k in dumps
                            if k[1] > rewind_snapshot.increment]:
                    del dumps[key]
                m = rewind_snapshot.increment + 1
                continue

        if m in checkpoints or m == loading.n_increments:
            cmap = system.cluster_map
            dumps[("acc_p", m)] = cluster_field_to_voxels(
                cmap, system.states.acc_p)
            dumps[("work_p", m)] = cluster_field_to_voxels(
                cmap, system.states.work_p)
            dumps[("labels", m)] = cmap.labels.astype(np.int64)
        m += 1
    return history, events, dumps, system


def run_oracle(cfg, grid):
    """Full-field reference run producing the same artifact shapes."""
    _check_materials(cfg, grid)
    loading = cfg.loading_path()
    solution = solve_full_field(
        grid, cfg.materials, loading, tol=cfg.oracle_tol,
        checkpoints={c - 1 for c in cfg.checkpoints},
        fracture=cfg.fracture)
    history = []
    for k in range(solution.n_increments):
        history.append(history_row(
            k + 1, solution.macro_strain[k], solution.macro_stress[k],
            grid.n_voxels, solution.reference, bool(solution.fractured[k]),
            int(solution.iterations[k]), 0))
    dumps = {}
    for k, fields in solution.checkpoint_fields.items():
        dumps[("acc_p", k + 1)] = fields["acc_p"].copy()
        dumps[("work_p", k + 1)] = fields["work_p"].copy()
    return history, dumps, solution


def run_cit_bench(cfg):
    """Interaction-matrix update benchmark over the configured grid of
    (n_init, beta) pairs. Returns (result dicts, csv lines, timing
    lines)."""
    bench = cfg.benchmark
    dims = tuple(bench["dims"])
    grid = VoxelGrid(dims, (float(dims[0]), float(dims[1])),
                     np.zeros(dims, dtype=int))
    root = np.random.SeedSequence(cfg.seed)
    results = []
    csv_lines = ["n_init,alpha,beta,n_retained,n_created,n_total,"
                 "full_standard,symmetry_standard,full_proposed,"
                 "symmetry_proposed"]
    timing_lines = []
    cases = [(n, beta) for n in bench["n_init"] for beta in bench["beta"]]
    for (n_init, beta), stream in zip(cases, root.spawn(len(cases))):
        result = benchmark_cit_update(grid, n_init, bench["alpha"], beta,
                                      seed=stream,
                                      repeats=bench["repeats"])
        result["alpha"] = bench["alpha"]
        result["beta"] = beta
        results.append(result)
        csv_lines.append(
            "%d,%.17g,%.17g,%d,%d,%d,%d,%d,%d,%d"
            % (n_init, bench["alpha"], beta, result["n_retained"],
               result["n_created"], result["n_total"],
               result["full_standard"], result["symmetry_standard"],
               result["full_proposed"], result["symmetry_proposed"]))
        timing_lines.append(
            "n_init=%d beta=%.6g time_standard=%.6e time_proposed=%.6e "
            "speedup=%.4f max_rel_diff=%.3e"
            % (n_init, beta, result["time_standard"],
               result["time_proposed"],
               result["time_standard"] / result["time_proposed"],
               result["max_rel_diff"]))
    return results, csv_lines, timing_lines


def execute(cfg):
    """Run one configuration into its output directory.

    Fills the directory per the module docstring, writing the manifest
    last. A failing stage still writes a manifest flagged with the stage
    name and the partial file list, then re-raises.
    """
    out = cfg.output
    os.makedirs(out, exist_ok=True)
    os.makedirs(os.path.join(out, FIELDS_DIR), exist_ok=True)
    config_text = serialize_config(cfg)
    config_hash = cfg.config_hash()
    files = []
    extra = []
    stage = "setup"

    def fail_manifest(exc):
        write_manifest(os.path.join(out, MANIFEST_NAME), config_text,
                       config_hash, cfg.seed, __version__, files,
                       status="failed %s: %s" % (stage, exc),
                       extra=extra)

    try:
        if cfg.mode == "cit-bench":
            stage = "benchmark"
            _, csv_lines, timing_lines = run_cit_bench(cfg)
            stage = "outputs"
            bench_path = os.path.join(out, "benchmark.csv")
            with open(bench_path, "w") as handle:
                handle.write("# crom benchmark\n# config %s seed %d\n"
                             % (config_hash, cfg.seed))
                handle.write("\n".join(csv_lines) + "\n")
            files.append("benchmark.csv")
            with open(os.path.join(out, "timings.log"), "w") as handle:
                handle.write("\n".join(timing_lines) + "\n")
            files.append("timings.log")
        else:
            stage = "rve"
            grid, achieved = resolve_grid(cfg)
            if achieved is not None:
                extra.append("generator_fraction %.17g" % achieved)
            if cfg.mode == "oracle":
                stage = "oracle"
                history, dumps, _ = run_oracle(cfg, grid)
                events = None
            else:
                stage = "online"
                history, events, dumps, _ = run_reduced(
                    cfg, grid, adaptive=(cfg.mode == "asca"))
                if cfg.mode != "asca":
                    events = None
            stage = "outputs"
            write_history_csv(os.path.join(out, HISTORY_NAME), history,
                              config_hash, cfg.seed)
            files.append(HISTORY_NAME)
            for (name, increment) in sorted(dumps):
                rel = os.path.join(FIELDS_DIR,
                                   field_filename(name, increment))
                write_field(os.path.join(out, rel), dumps[(name,
                                                           increment)],
                            grid.dims, name, increment, config_hash,
                            cfg.seed)
                files.append(rel)
            if events is not None:
                write_events(os.path.join(out, EVENTS_NAME), events,
                             config_hash, cfg.seed)
                files.append(EVENTS_NAME)
    except Exception as exc:
        fail_manifest(exc)
        raise
    write_manifest(os.path.join(out, MANIFEST_NAME), config_text,
                   config_hash, cfg.seed, __version__, files,
                   extra=extra)
    return 0
