"""Command-line entry point: ``sparsemix {fit,simulate,evaluate}``.

Exit codes: 0 success, 2 input/parse error, 3 fit failure. Outputs are
deterministic given identical flags, seed and thread count.
"""

import argparse
import os
import sys

import numpy as np

from . import io
from .exceptions import SparsemixError
from .icf import IcfConfig
from .metrics import MetricReport, adjusted_rand_index, graph_recovery_rates
from .search import GaConfig, StepwiseConfig
from .sem import SemConfig, select_model
from .simulate import DEFAULT_TAU, ScenarioSpec, scenario_dataset

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_FIT = 3


def _default_threads():
    env = os.environ.get("SPARSEMIX_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="sparsemix",
        description="Model-based clustering with sparse covariance matrices.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit mixtures over a range of K")
    p_fit.add_argument("input", help="numeric CSV, observations in rows")
    p_fit.add_argument("--k-min", type=int, default=1)
    p_fit.add_argument("--k-max", type=int, default=4)
    p_fit.add_argument("--penalty", default="bic",
                       choices=["bic", "ebic", "er", "pl", "none"])
    p_fit.add_argument("--gamma", type=float, default=1.0,
                       help="ebic weight in [0, 1]")
    p_fit.add_argument("--alpha", type=float, default=None,
                       help="er connection probability (default log V / T)")
    p_fit.add_argument("--beta", type=float, default=None,
                       help="power-law weight (default log(N V))")
    p_fit.add_argument("--search", default="stepwise", choices=["stepwise", "ga"])
    p_fit.add_argument("--graph", default="search",
                       choices=["search", "complete", "empty"],
                       help="search structures or force one fixed graph")
    p_fit.add_argument("--occam-c", type=float, default=50.0,
                       help="stepwise pruning window (inf disables pruning)")
    p_fit.add_argument("--pop-size", type=int, default=50)
    p_fit.add_argument("--stall", type=int, default=100,
                       help="GA generations without improvement before stopping")
    p_fit.add_argument("--no-prior", action="store_true",
                       help="disable the regularizing covariance prior")
    p_fit.add_argument("--prior-c", type=float, default=0.001)
    p_fit.add_argument("--init", default="hierarchical",
                       choices=["hierarchical", "kmeans"])
    p_fit.add_argument("--restarts", type=int, default=1)
    p_fit.add_argument("--icf-tol", type=float, default=1e-6)
    p_fit.add_argument("--icf-max-sweeps", type=int, default=200)
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--threads", type=int, default=None,
                       help="worker count (default SPARSEMIX_THREADS or cores)")
    p_fit.add_argument("--standardize", action="store_true",
                       help="center and scale columns before fitting")
    p_fit.add_argument("--header", default="auto", choices=["auto", "yes", "no"])
    p_fit.add_argument("--delimiter", default=",")
    p_fit.add_argument("--out", default="fit.json", help="output JSON path")

    p_sim = sub.add_parser("simulate", help="generate a synthetic dataset")
    p_sim.add_argument("--scenario", type=int, required=True, choices=[1, 2, 3, 4])
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--v", type=int, required=True)
    p_sim.add_argument("--k", type=int, default=3)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out-prefix", default="sim")

    p_eval = sub.add_parser("evaluate", help="score a fit against the truth")
    p_eval.add_argument("--fit", help="fit JSON (labels and graphs)")
    p_eval.add_argument("--labels", help="estimated labels CSV (alternative)")
    p_eval.add_argument("--graphs", help="estimated graphs JSON (alternative)")
    p_eval.add_argument("--truth-labels", required=True)
    p_eval.add_argument("--truth-graphs")
    p_eval.add_argument("--out", default="report.json")
    return parser


def _cmd_fit(args):
    try:
        X = io.load_matrix_csv(args.input, header=args.header,
                               delimiter=args.delimiter)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.standardize:
        sd = X.std(axis=0)
        if np.any(sd == 0):
            print("error: constant column, cannot standardize", file=sys.stderr)
            return EXIT_INPUT
        X = (X - X.mean(axis=0)) / sd

    threads = args.threads if args.threads else _default_threads()
    cfg = SemConfig(
        penalty_kind=args.penalty, gamma=args.gamma, alpha=args.alpha,
        beta=args.beta, search=args.search,
        forced_graph=None if args.graph == "search" else args.graph,
        stepwise=StepwiseConfig(occam_c=args.occam_c),
        ga=GaConfig(pop_size=args.pop_size, stall_generations=args.stall),
        icf=IcfConfig(tol=args.icf_tol, max_sweeps=args.icf_max_sweeps),
        init_method=args.init, prior=not args.no_prior, prior_c=args.prior_c,
        restarts=args.restarts, seed=args.seed, threads=threads)

    try:
        best, table = select_model(X, range(args.k_min, args.k_max + 1), cfg)
    except (SparsemixError, ValueError) as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT

    print(f"{'K':>3} {'BIC':>14} {'params':>7} {'conv':>5}  edges per component")
    for row in table:
        if row["bic"] is None:
            print(f"{row['k']:>3} {'failed':>14}        {row['error']}")
            continue
        edges = ",".join(str(e) for e in row["edges"])
        print(f"{row['k']:>3} {row['bic']:>14.3f} {row['n_params']:>7} "
              f"{'yes' if row['converged'] else 'no':>5}  [{edges}]")
    print(f"selected K = {best.k} (BIC {best.bic:.3f}, {best.n_params} parameters)")
    for i, comp in enumerate(best.model.comps):
        print(f"  component {i + 1}: {comp.graph.edge_count()} edges, "
              f"graph {comp.graph.to_bitstring()}")

    io.save_fit_json(args.out, best)
    print(f"fit written to {args.out}")
    return EXIT_OK


def _cmd_simulate(args):
    try:
        spec = ScenarioSpec(id=args.scenario, v=args.v, k=args.k, seed=args.seed)
        tau = DEFAULT_TAU if args.k == 3 else tuple([1.0 / args.k] * args.k)
        X, labels, graphs, covariances, _ = scenario_dataset(spec, args.n, tau)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    prefix = args.out_prefix
    np.savetxt(f"{prefix}_data.csv", X, delimiter=",", fmt="%.17g")
    io.save_labels_csv(f"{prefix}_labels.csv", labels)
    io.save_graphs_json(f"{prefix}_graphs.json", graphs)
    io.save_covariances_json(f"{prefix}_covariances.json", covariances)
    print(f"wrote {prefix}_data.csv, {prefix}_labels.csv, "
          f"{prefix}_graphs.json, {prefix}_covariances.json")
    return EXIT_OK


def _cmd_evaluate(args):
    if not args.fit and not args.labels:
        print("error: need --fit or --labels", file=sys.stderr)
        return EXIT_INPUT
    try:
        if args.fit:
            fitres = io.load_fit_json(args.fit)
            est_labels = fitres.labels
            est_graphs = [c.graph for c in fitres.model.comps]
            k_hat = fitres.k
        else:
            est_labels = io.load_labels_csv(args.labels)
            est_graphs = io.load_graphs_json(args.graphs) if args.graphs else None
            k_hat = int(np.unique(est_labels).size)
        truth_labels = io.load_labels_csv(args.truth_labels)
        truth_graphs = (io.load_graphs_json(args.truth_graphs)
                        if args.truth_graphs else None)
        ari = adjusted_rand_index(est_labels, truth_labels)
        fpr = fnr = None
        if est_graphs is not None and truth_graphs is not None:
            fpr, fnr = graph_recovery_rates(est_graphs, truth_graphs)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report = MetricReport(ari=ari, fpr=fpr, fnr=fnr, k_hat=k_hat)
    io.dump_json(args.out, {"ari": report.ari, "fpr": report.fpr,
                            "fnr": report.fnr, "k_hat": report.k_hat})
    parts = [f"ARI {ari:.4f}"]
    if fpr is not None:
        parts.append(f"FPR {fpr:.4f}")
        parts.append(f"FNR {fnr:.4f}")
    print(", ".join(parts) + f" (report written to {args.out})")
    return EXIT_OK


def main(argv=None):
    args = _build_parser().parse_args(argv)
    if args.command == "fit":
        return _cmd_fit(args)
    if args.command == "simulate":
        return _cmd_simulate(args)
    return _cmd_evaluate(args)


if __name__ == "__main__":
    sys.exit(main())
