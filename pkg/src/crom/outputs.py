"""On-disk run artifacts: history CSV, binary field dumps, manifest,
event log, and run-to-run comparison.

Every file starts with a header carrying the configuration hash and the
seed, so artifacts are traceable and two runs with equal configuration
and seed are bitwise identical. Floats are written with 17 significant
digits (lossless for IEEE doubles); field payloads are raw little-endian
arrays after a text header. The manifest deliberately records no
timestamps. The adaptivity event log is the one artifact that may differ
between otherwise identical runs (it contains wall-clock timings).
"""

import hashlib
import os

import numpy as np

from crom.solver import compute_toughness
from crom.tensors import SQRT2

HISTORY_NAME = "history.csv"
MANIFEST_NAME = "manifest.txt"
EVENTS_NAME = "events.log"
FIELDS_DIR = "fields"

HISTORY_COLUMNS = ("increment", "eps_xx", "eps_yy", "eps_xy",
                   "sig_xx", "sig_yy", "sig_xy", "n_c",
                   "ref_lambda", "ref_mu", "fractured",
                   "newton_iters", "sc_iters")

_DTYPES = {"float64": "<f8", "int64": "<i8"}


def _g17(x):
    return "%.17g" % float(x)


# =============================================================================
# History CSV
# =============================================================================
def history_row(increment, strain, stress, n_c, reference, fractured,
                newton_iters, sc_iters):
    """One homogenized-history record (strain/stress are length-3 Mandel
    vectors; the CSV stores tensor shear components)."""
    return {
        "increment": int(increment),
        "eps_xx": float(strain[0]), "eps_yy": float(strain[1]),
        "eps_xy": float(strain[2]) / SQRT2,
        "sig_xx": float(stress[0]), "sig_yy": float(stress[1]),
        "sig_xy": float(stress[2]) / SQRT2,
        "n_c": int(n_c),
        "ref_lambda": float(reference.lame_lambda),
        "ref_mu": float(reference.shear_mu),
        "fractured": 1 if fractured else 0,
        "newton_iters": int(newton_iters),
        "sc_iters": int(sc_iters),
    }


def write_history_csv(path, rows, config_hash, seed):
    lines = ["# crom history",
             "# config %s seed %d" % (config_hash, seed),
             ",".join(HISTORY_COLUMNS)]
    for row in rows:
        cells = []
        for col in HISTORY_COLUMNS:
            value = row[col]
            cells.append(str(value) if isinstance(value, int)
                         else _g17(value))
        lines.append(",".join(cells))
    with open(path, "w") as handle:
        handle.write("\n".join(lines) + "\n")


def read_history_csv(path):
    """-> (rows, config hash, seed)."""
    with open(path) as handle:
        lines = handle.read().splitlines()
    if len(lines) < 3 or not lines[1].startswith("# config "):
        raise ValueError("%s: not a history CSV" % path)
    tokens = lines[1].split()
    config_hash, seed = tokens[2], int(tokens[4])
    header = lines[2].split(",")
    if tuple(header) != HISTORY_COLUMNS:
        raise ValueError("%s: unexpected columns %r" % (path, header))
    rows = []
    for line in lines[3:]:
        if not line:
            continue
        cells = line.split(",")
        row = {}
        for col, cell in zip(HISTORY_COLUMNS, cells):
            row[col] = int(cell) if col in ("increment", "n_c",
                                            "fractured", "newton_iters",
                                            "sc_iters") else float(cell)
        rows.append(row)
    return rows, config_hash, seed


# =============================================================================
# Binary field dumps
# =============================================================================
def field_filename(name, increment):
    return "%s_%06d.bin" % (name, increment)


def write_field(path, values, dims, name, increment, config_hash, seed):
    values = np.asarray(values)
    if values.dtype.kind == "f":
        dtype = "float64"
    elif values.dtype.kind in "iu":
        dtype = "int64"
    else:
        raise ValueError("unsupported field dtype %r" % (values.dtype,))
    payload = np.ascontiguousarray(
        values.reshape(-1).astype(_DTYPES[dtype]))
    header = ("# crom field v1\n"
              "# config %s seed %d\n"
              "# field %s increment %d dtype %s dims %d %d\n"
              "# payload %d\n"
              % (config_hash, seed, name, increment, dtype,
                 dims[0], dims[1], payload.nbytes))
    with open(path, "wb") as handle:
        handle.write(header.encode("ascii"))
        handle.write(payload.tobytes())


def read_field(path):
    """-> (values reshaped to dims, meta dict)."""
    with open(path, "rb") as handle:
        blob = handle.read()
    lines = []
    offset = 0
    while len(lines) < 4:
        end = blob.index(b"\n", offset)
        lines.append(blob[offset:end].decode("ascii"))
        offset = end + 1
    if lines[0] != "# crom field v1":
        raise ValueError("%s: not a field dump" % path)
    t1 = lines[1].split()
    t2 = lines[2].split()
    t3 = lines[3].split()
    meta = {"config": t1[2], "seed": int(t1[4]), "name": t2[2],
            "increment": int(t2[4]), "dtype": t2[6],
            "dims": (int(t2[8]), int(t2[9]))}
    nbytes = int(t3[2])
    payload = blob[offset:offset + nbytes]
    if len(payload) != nbytes:
        raise ValueError("%s: truncated payload" % path)
    values = np.frombuffer(payload, dtype=_DTYPES[meta["dtype"]])
    return values.reshape(meta["dims"]).copy(), meta


# =============================================================================
# Event log
# =============================================================================
def format_event(event):
    if event.get("kind") == "rewind":
        return ("rewind to_increment=%d n_c=%d"
                % (event["to_increment"], event["n_c"]))
    if event.get("kind") == "store":
        return "store increment=%d n_c=%d" % (event["increment"],
                                              event["n_c"])
    return ("step increment=%d targets=%s jumps=%s children=%s "
            "n_c=%d->%d t_select=%.6f t_split=%.6f t_cit=%.6f"
            % (event["increment"],
               ",".join(str(t) for t in event["targets"]) or "-",
               ",".join("%.6g" % j for j in event["jumps"]) or "-",
               ",".join(str(c) for c in event["children"]) or "-",
               event["n_c_before"], event["n_c_after"],
               event["time_select"], event["time_split"],
               event["time_cit"]))


def write_events(path, events, config_hash, seed):
    lines = ["# crom events",
             "# config %s seed %d" % (config_hash, seed)]
    lines.extend(format_event(e) for e in events)
    with open(path, "w") as handle:
        handle.write("\n".join(lines) + "\n")


# =============================================================================
# Manifest
# =============================================================================
def write_manifest(path, config_text, config_hash, seed, version,
                   files, status="complete", extra=()):
    """Run manifest: status, environment versions, per-file checksums and
    the full canonical configuration echo. No timestamps, so identical
    runs produce identical manifests."""
    lines = ["# crom manifest",
             "config_hash %s" % config_hash,
             "seed %d" % seed,
             "version %s" % version,
             "numpy %s" % np.__version__,
             "status %s" % status]
    lines.extend(extra)
    base = os.path.dirname(path)
    for rel in sorted(files):
        digest = hashlib.sha256()
        with open(os.path.join(base, rel), "rb") as handle:
            digest.update(handle.read())
        lines.append("file %s sha256 %s" % (rel, digest.hexdigest()))
    lines.append("config:")
    lines.extend("  " + line for line in config_text.splitlines())
    with open(path, "w") as handle:
        handle.write("\n".join(lines) + "\n")


# =============================================================================
# Run-to-run comparison
# =============================================================================
def relative_error_pct(value, reference):
    if reference == 0.0:
        return float("nan") if value != 0.0 else 0.0
    return abs(value - reference) / abs(reference) * 100.0


def _history_toughness(rows):
    """Toughness from a history table: the work density ∫σ:dε summed
    over components, integrated up to the fracture increment when one is
    flagged."""
    strain = np.array([[r["eps_xx"], r["eps_yy"], r["eps_xy"] * SQRT2]
                       for r in rows])
    stress = np.array([[r["sig_xx"], r["sig_yy"], r["sig_xy"] * SQRT2]
                       for r in rows])
    end = None
    for k, row in enumerate(rows):
        if row["fractured"]:
            end = k
            break
    return sum(compute_toughness(strain[:, c], stress[:, c],
                                 end_index=end) for c in range(3))


def _run_fields(run_dir):
    """Map (field name, increment) -> path for one run directory."""
    out = {}
    fdir = os.path.join(run_dir, FIELDS_DIR)
    if not os.path.isdir(fdir):
        return out
    for entry in sorted(os.listdir(fdir)):
        if not entry.endswith(".bin"):
            continue
        stem = entry[:-4]
        name, _, inc = stem.rpartition("_")
        try:
            out[(name, int(inc))] = os.path.join(fdir, entry)
        except ValueError:
            continue
    return out


def compare_runs(run_dirs):
    """Compare runs against the last one (the reference).

    Returns a report dict with per-run relative errors of the final
    homogenized stress components and of toughness, and per-checkpoint
    RMSE tables for the dumped scalar fields (checkpoints not shared by
    all runs are dropped; the intersection used is reported).
    """
    if len(run_dirs) < 2:
        raise ValueError("need at least two run directories")
    runs = []
    for run_dir in run_dirs:
        rows, config_hash, seed = read_history_csv(
            os.path.join(run_dir, HISTORY_NAME))
        runs.append({"dir": run_dir, "rows": rows, "hash": config_hash,
                     "seed": seed, "fields": _run_fields(run_dir),
                     "toughness": _history_toughness(rows)})
    reference = runs[-1]

    report = {"reference": reference["dir"], "homogenized": [],
              "rmse": [], "checkpoints": {}}
    ref_final = reference["rows"][-1]
    for run in runs[:-1]:
        final = run["rows"][-1]
        entry = {"dir": run["dir"]}
        for col in ("sig_xx", "sig_yy", "sig_xy"):
            entry["err_%s_pct" % col] = relative_error_pct(
                final[col], ref_final[col])
        entry["toughness"] = run["toughness"]
        entry["toughness_ref"] = reference["toughness"]
        entry["err_toughness_pct"] = relative_error_pct(
            run["toughness"], reference["toughness"])
        report["homogenized"].append(entry)

    field_names = sorted({name for run in runs
                          for (name, _) in run["fields"]
                          if name in ("acc_p", "work_p")})
    for name in field_names:
        shared = None
        for run in runs:
            incs = {inc for (n, inc) in run["fields"] if n == name}
            shared = incs if shared is None else shared & incs
        shared = sorted(shared or ())
        report["checkpoints"][name] = shared
        for inc in shared:
            ref_values, _ = read_field(reference["fields"][(name, inc)])
            for run in runs[:-1]:
                values, _ = read_field(run["fields"][(name, inc)])
                if values.shape != ref_values.shape:
                    raise ValueError(
                        "field %s at increment %d: shape %r vs reference "
                        "%r" % (name, inc, values.shape,
                                ref_values.shape))
                rmse = float(np.sqrt(np.mean(
                    (values.astype(float) - ref_values.astype(float))
                    ** 2)))
                report["rmse"].append({"dir": run["dir"], "field": name,
                                       "increment": inc, "rmse": rmse})
    return report


def render_compare_text(report):
    lines = ["reference: %s" % report["reference"], "",
             "homogenized (final increment, % error vs reference):"]
    for entry in report["homogenized"]:
        lines.append("  %s" % entry["dir"])
        lines.append("    sig_xx %.6g%%  sig_yy %.6g%%  sig_xy %.6g%%"
                     % (entry["err_sig_xx_pct"], entry["err_sig_yy_pct"],
                        entry["err_sig_xy_pct"]))
        lines.append("    toughness %.10g vs %.10g  (%.6g%%)"
                     % (entry["toughness"], entry["toughness_ref"],
                        entry["err_toughness_pct"]))
    lines.append("")
    for name, incs in sorted(report["checkpoints"].items()):
        lines.append("field %s checkpoints used: %s"
                     % (name, " ".join(str(i) for i in incs) or "(none)"))
    lines.append("")
    if report["rmse"]:
        lines.append("RMSE vs reference:")
        for row in report["rmse"]:
            lines.append("  %-10s inc %6d  %-28s %.10g"
                         % (row["field"], row["increment"], row["dir"],
                            row["rmse"]))
    return "\n".join(lines)


def write_compare_csv(report, path):
    lines = ["kind,dir,field,increment,value"]
    for entry in report["homogenized"]:
        for col in ("sig_xx", "sig_yy", "sig_xy"):
            lines.append("relerr_pct,%s,%s,final,%s"
                         % (entry["dir"], col,
                            _g17(entry["err_%s_pct" % col])))
        lines.append("toughness,%s,J,final,%s"
                     % (entry["dir"], _g17(entry["toughness"])))
        lines.append("relerr_pct,%s,toughness,final,%s"
                     % (entry["dir"], _g17(entry["err_toughness_pct"])))
    for row in report["rmse"]:
        lines.append("rmse,%s,%s,%d,%s"
                     % (row["dir"], row["field"], row["increment"],
                        _g17(row["rmse"])))
    with open(path, "w") as handle:
        handle.write("\n".join(lines) + "\n")
