"""CSV and JSON serialization for fits, graphs and labels.

All user-facing indices (component labels, variable numbers) are 1-indexed
in files and console output; everything in memory stays 0-indexed. JSON is
written with sorted keys and a fixed layout so identical fits produce
byte-identical files; covariance zeros are serialized as exact ``0.0``.
"""

import csv
import json

import numpy as np

from .graphs import Graph
from .icf import ScoredStructure
from .sem import FitResult, MixtureModel


def load_matrix_csv(path, header="auto", delimiter=","):
    """Numeric N x V matrix from CSV. ``header``: auto, yes or no."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        raw = [row for row in reader if row and any(cell.strip() for cell in row)]
    if not raw:
        raise ValueError(f"{path}: no data rows")
    start = 0
    if header == "yes":
        start = 1
    elif header == "auto":
        try:
            [float(cell) for cell in raw[0]]
        except ValueError:
            start = 1
    if start >= len(raw):
        raise ValueError(f"{path}: header only, no data rows")
    width = len(raw[start])
    for lineno, row in enumerate(raw[start:], start=start + 1):
        if len(row) != width:
            raise ValueError(f"{path}: row {lineno} has {len(row)} fields, "
                             f"expected {width}")
        try:
            rows.append([float(cell) for cell in row])
        except ValueError as exc:
            raise ValueError(f"{path}: row {lineno}: {exc}") from None
    return np.asarray(rows, dtype=float)


def save_labels_csv(path, labels):
    """One 1-indexed label per line."""
    with open(path, "w") as fh:
        for lab in np.asarray(labels).ravel():
            fh.write(f"{int(lab) + 1}\n")


def load_labels_csv(path):
    """Label vector (0-indexed in memory)."""
    labels = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                labels.append(int(float(line)))
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: not a label") from None
    if not labels:
        raise ValueError(f"{path}: no labels")
    return np.asarray(labels, dtype=np.int64) - 1


def dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def save_graphs_json(path, graphs):
    dump_json(path, {"v": graphs[0].v,
                     "graphs": [g.to_bitstring() for g in graphs]})


def load_graphs_json(path):
    doc = load_json(path)
    return [Graph.from_bitstring(s) for s in doc["graphs"]]


def save_covariances_json(path, covariances):
    dump_json(path, {"covariances": [np.asarray(c).tolist() for c in covariances]})


def fit_result_to_dict(res):
    """JSON-ready form of a fit; the loader below inverts it exactly."""
    model = res.model
    return {
        "k": res.k,
        "tau": model.tau.tolist(),
        "means": model.means.tolist(),
        "covariances": [c.sigma.tolist() for c in model.comps],
        "graphs": [c.graph.to_bitstring() for c in model.comps],
        "loglik": res.loglik,
        "loglik_trace": res.ll_trace.tolist(),
        "bic": res.bic,
        "n_params": res.n_params,
        "labels": [int(l) + 1 for l in res.labels],
        "converged": bool(res.converged),
        "iterations": res.iterations,
        "seed": res.seed,
        "notes": list(res.notes),
    }


def save_fit_json(path, res):
    dump_json(path, fit_result_to_dict(res))


def fit_result_from_dict(doc):
    """Rebuild a FitResult from its JSON form (responsibilities are not
    stored; they are left as the hard assignment)."""
    graphs = [Graph.from_bitstring(s) for s in doc["graphs"]]
    comps = [
        ScoredStructure(g, np.asarray(sig, dtype=float), float("nan"))
        for g, sig in zip(graphs, doc["covariances"])
    ]
    model = MixtureModel(np.asarray(doc["tau"], dtype=float),
                         np.asarray(doc["means"], dtype=float), comps)
    labels = np.asarray(doc["labels"], dtype=np.int64) - 1
    resp = np.zeros((labels.shape[0], doc["k"]))
    resp[np.arange(labels.shape[0]), labels] = 1.0
    return FitResult(
        model=model, resp=resp, labels=labels,
        ll_trace=np.asarray(doc["loglik_trace"], dtype=float),
        loglik=float(doc["loglik"]), bic=float(doc["bic"]),
        n_params=int(doc["n_params"]), converged=bool(doc["converged"]),
        iterations=int(doc["iterations"]), k=int(doc["k"]),
        seed=int(doc["seed"]), notes=list(doc.get("notes", [])))


def load_fit_json(path):
    return fit_result_from_dict(load_json(path))
