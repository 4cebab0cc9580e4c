"""Command-line entry point: mask generation, self-verification, mask
statistics, and sampler benchmarks.

Exit codes: 0 success, 1 runtime or property failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from ._backend import HAVE_NUMBA, greedy_select, set_active_backend, warmup
from .dpp import (
    GAIN_FLOOR,
    enum_budget,
    exact_map,
    greedy_init,
    greedy_step,
    normalization_constant,
)
from .errors import DppMaskError
from .formats import document_from_result, read_features, read_image, write_mask, write_overlay
from .kernel import FeatureMatrix, gaussian_kernel
from .masking import MaskConfig, derived_seed, effective_features, generate_mask, patchify
from .numerics import SymMatrix, log_det, submatrix

_IMAGE_SUFFIX = {1: ".pgm", 3: ".ppm"}


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dppmask",
        description="Diverse patch masking via greedy DPP sampling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--mask-ratio", type=float, default=0.75, help="fraction of patches hidden (default 0.75)")
        p.add_argument("--tau", type=float, default=0.8, help="purge ratio: 0 fully greedy, 1 fully random (default 0.8)")
        p.add_argument("--epsilon", type=float, default=1.0, help="Gaussian kernel bandwidth (default 1)")
        p.add_argument("--patch-size", type=int, default=16, help="square patch side in pixels (default 16)")
        p.add_argument("--seed", type=int, default=0, help="unsigned 64-bit seed (default 0)")
        p.add_argument("--mode", choices=("pixel", "feature"), default="pixel", help="input kind: images or feature files")

    p_mask = sub.add_parser("mask", help="write one mask document per input file")
    p_mask.add_argument("inputs", nargs="+", metavar="FILE", help="PGM/PPM images (pixel mode) or feature files (feature mode)")
    add_config_flags(p_mask)
    p_mask.add_argument("--overlay", action="store_true", help="also write a mid-gray overlay image per input (pixel mode only)")
    p_mask.add_argument("--out-dir", type=Path, default=None, help="output directory (default: next to each input)")

    p_verify = sub.add_parser("verify", help="run the self-contained randomized verification suites")
    p_verify.add_argument("--trials", type=int, default=20, help="random instances per suite (default 20)")
    p_verify.add_argument("--seed", type=int, default=0, help="unsigned 64-bit seed (default 0)")
    p_verify.add_argument("--corrupt-update", action="store_true", help=argparse.SUPPRESS)

    p_stats = sub.add_parser("stats", help="mask diversity statistics over repeated draws")
    p_stats.add_argument("input", metavar="FILE", help="PGM/PPM image (pixel mode) or feature file (feature mode)")
    add_config_flags(p_stats)
    p_stats.add_argument("--tau-list", default="0,1", help="comma-separated purge ratios to sweep (default 0,1)")
    p_stats.add_argument("--trials", type=int, default=50, help="independent draws per purge ratio (default 50)")

    p_bench = sub.add_parser("bench", help="time mask generation across instance sizes and modes")
    p_bench.add_argument("--trials", type=int, default=30, help="timed repetitions per mode (default 30)")
    p_bench.add_argument("--seed", type=int, default=0, help="seed for synthetic instances (default 0)")

    return parser


def _validate_args(parser: argparse.ArgumentParser, args: argparse.Namespace) -> None:
    # all flag validation happens here, before any file is read or written
    if hasattr(args, "mask_ratio") and not 0.0 <= args.mask_ratio < 1.0:
        parser.error(f"--mask-ratio must be in [0, 1), got {args.mask_ratio}")
    if hasattr(args, "tau") and not 0.0 <= args.tau <= 1.0:
        parser.error(f"--tau must be in [0, 1], got {args.tau}")
    if hasattr(args, "epsilon") and not args.epsilon > 0.0:
        parser.error(f"--epsilon must be positive, got {args.epsilon}")
    if hasattr(args, "patch_size") and args.patch_size < 1:
        parser.error(f"--patch-size must be >= 1, got {args.patch_size}")
    if hasattr(args, "seed") and not 0 <= args.seed < 1 << 64:
        parser.error(f"--seed must be an unsigned 64-bit value, got {args.seed}")
    if args.command == "mask" and args.overlay and args.mode == "feature":
        parser.error("--overlay requires --mode pixel")
    if args.command == "verify" and args.trials < 0:
        parser.error(f"--trials must be >= 0, got {args.trials}")
    if args.command in ("stats", "bench") and args.trials < 1:
        parser.error(f"--trials must be >= 1, got {args.trials}")
    if args.command == "stats":
        try:
            taus = [float(t) for t in args.tau_list.split(",") if t.strip() != ""]
        except ValueError:
            parser.error(f"--tau-list must be comma-separated numbers, got {args.tau_list!r}")
        if not taus:
            parser.error("--tau-list must name at least one purge ratio")
        for t in taus:
            if not 0.0 <= t <= 1.0:
                parser.error(f"--tau-list values must be in [0, 1], got {t}")
        args.taus = taus


def _config_from_args(args: argparse.Namespace, tau: float | None = None) -> MaskConfig:
    return MaskConfig(
        mask_ratio=args.mask_ratio,
        tau=args.tau if tau is None else tau,
        epsilon=args.epsilon,
        patch_size=args.patch_size,
        seed=args.seed,
        mode=args.mode,
    )


def _load_input(path: Path, args: argparse.Namespace):
    """Returns (features, grid, image_or_None) for one input file."""
    if args.mode == "pixel":
        image = read_image(path)
        grid, features = patchify(image, args.patch_size)
        return features, grid, image
    return read_features(path), None, None


# ---------------------------------------------------------------------------
# mask


def cmd_mask(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    failed = False
    for i, name in enumerate(args.inputs):
        path = Path(name)
        try:
            features, grid, image = _load_input(path, args)
            rng = np.random.default_rng(derived_seed(config.seed, i))
            result = generate_mask(features, config, rng=rng, grid=grid)
            out_dir = args.out_dir if args.out_dir is not None else path.parent
            out_dir.mkdir(parents=True, exist_ok=True)
            doc_path = out_dir / f"{path.stem}.mask.json"
            write_mask(document_from_result(result), doc_path)
            print(f"{path}: {doc_path} ({len(result.visible)} visible)")
            if args.overlay:
                suffix = _IMAGE_SUFFIX[result.grid.channels]
                overlay_path = out_dir / f"{path.stem}.overlay{suffix}"
                write_overlay(image, result, overlay_path)
                print(f"{path}: {overlay_path}")
        except (DppMaskError, OSError) as err:
            failed = True
            print(f"error: {path}: {type(err).__name__}: {err}", file=sys.stderr)
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# verify


def _random_ensemble(rng: np.random.Generator, n: int, dim: int):
    # scaled so pairwise squared distances are O(1): strong off-diagonals
    # make the identities nontrivial to satisfy
    f = rng.normal(size=(n, dim)) / math.sqrt(dim)
    return gaussian_kernel(FeatureMatrix(f))


def _det_sum_all_subsets(a: np.ndarray) -> float:
    """Sum of det(L_A) over every subset A, the empty set contributing 1.

    Direct enumeration; the identity under test computes the same quantity
    through a Cholesky factorization of L + I, so the routes are independent.
    """
    n = a.shape[0]
    total = 1.0
    for m in range(1, n + 1):
        idx = np.array(list(itertools.combinations(range(n), m)), dtype=np.intp)
        subs = a[idx[:, :, None], idx[:, None, :]]
        total += float(np.sum(np.linalg.det(subs)))
    return total


def _suite_normalization(trials: int, rng: np.random.Generator) -> float:
    max_err = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, 13))
        ens = _random_ensemble(rng, n, int(rng.integers(2, 9)))
        z = normalization_constant(ens)
        s = _det_sum_all_subsets(ens.matrix.entries)
        max_err = max(max_err, abs(s - z) / z)
    return max_err


def _corrupted_greedy_gains(a: np.ndarray, k: int) -> tuple[list[int], list[float]]:
    # fault-injection twin of the incremental update; the extension row is
    # scaled by 1.001 so the det identity must fail
    n = a.shape[0]
    gains = np.diag(a).copy()
    c = np.zeros((k, n))
    excluded = np.zeros(n, dtype=bool)
    picks: list[int] = []
    step_gains: list[float] = []
    for step in range(k):
        masked = np.where(excluded, -np.inf, gains)
        j = int(np.argmax(masked))
        g = float(masked[j])
        picks.append(j)
        step_gains.append(g)
        excluded[j] = True
        e = (a[j, :] - c[:step, :].T @ c[:step, j]) / math.sqrt(g)
        e = e * 1.001
        c[step, :] = e
        gains -= e * e
        np.maximum(gains, 0.0, out=gains)
    return picks, step_gains


def _suite_gain_identity(trials: int, rng: np.random.Generator, corrupt: bool) -> float:
    max_err = 0.0
    for _ in range(trials):
        n, k = 40, 20
        ens = _random_ensemble(rng, n, 8)
        a = ens.matrix.entries
        if corrupt:
            picks, gains = _corrupted_greedy_gains(a, k)
        else:
            state = greedy_init(ens)
            picks, gains = [], []
            for _ in range(k):
                state, picked, gain = greedy_step(state, ens)
                picks.append(picked)
                gains.append(gain)
        log_inc = 0.0
        for step in range(k):
            log_inc += math.log(gains[step])
            sel = picks[: step + 1]
            sign, log_direct = np.linalg.slogdet(a[np.ix_(sel, sel)])
            if sign <= 0:
                max_err = max(max_err, math.inf)
                continue
            max_err = max(max_err, abs(math.expm1(log_inc - log_direct)))
    return max_err


def _naive_greedy_picks(a: np.ndarray, k: int) -> list[int]:
    n = a.shape[0]
    sel: list[int] = []
    remaining = list(range(n))
    for _ in range(k):
        best_j, best_ld = -1, -math.inf
        for j in remaining:
            idx = sel + [j]
            sign, ld = np.linalg.slogdet(a[np.ix_(idx, idx)])
            val = ld if sign > 0 else -math.inf
            if val > best_ld:
                best_ld, best_j = val, j
        sel.append(best_j)
        remaining.remove(best_j)
    return sel


def _suite_greedy_consistency(trials: int, rng: np.random.Generator) -> int:
    mismatches = 0
    for _ in range(trials):
        n = int(rng.integers(8, 31))
        k = max(1, n // 2)
        ens = _random_ensemble(rng, n, 6)
        a = ens.matrix.entries
        picks, _, _ = greedy_select(a, k, 0.0, GAIN_FLOOR)
        naive = _naive_greedy_picks(a, k)
        if list(picks) != naive:
            mismatches += 1
    return mismatches


def cmd_verify(args: argparse.Namespace) -> int:
    trials = args.trials
    if trials == 0:
        print("warning: --trials 0 verifies nothing", file=sys.stderr)
        for name in ("normalization-identity", "gain-identity", "greedy-consistency"):
            print(f"PASS {name} trials=0 (vacuous)")
        return 0

    ok = True

    err = _suite_normalization(trials, np.random.default_rng(derived_seed(args.seed, 1)))
    passed = err <= 1e-9
    ok &= passed
    print(f"{'PASS' if passed else 'FAIL'} normalization-identity trials={trials} max_rel_err={err:.3e}")

    err = _suite_gain_identity(trials, np.random.default_rng(derived_seed(args.seed, 2)), args.corrupt_update)
    passed = err <= 1e-8
    ok &= passed
    print(f"{'PASS' if passed else 'FAIL'} gain-identity trials={trials} max_rel_err={err:.3e}")

    mism = _suite_greedy_consistency(trials, np.random.default_rng(derived_seed(args.seed, 3)))
    passed = mism == 0
    ok &= passed
    print(f"{'PASS' if passed else 'FAIL'} greedy-consistency trials={trials} mismatches={mism}")

    return 0 if ok else 1


# ---------------------------------------------------------------------------
# stats


def _pairwise_jaccard_distance(sets: list[np.ndarray]) -> float:
    dists = []
    for a, b in itertools.combinations(sets, 2):
        inter = len(np.intersect1d(a, b, assume_unique=True))
        union = len(a) + len(b) - inter
        dists.append(1.0 - inter / union)
    return float(np.mean(dists))


def cmd_stats(args: argparse.Namespace) -> int:
    path = Path(args.input)
    features, grid, _ = _load_input(path, args)
    base = _config_from_args(args)
    if grid is None:
        from .masking import feature_grid

        grid = feature_grid(features.count)
    rows = effective_features(features, base, grid)
    kmat = gaussian_kernel(rows, base.epsilon).matrix

    report = {
        "schema_version": 1,
        "input": path.name,
        "n_items": features.count,
        "trials": args.trials,
        "mask_ratio": args.mask_ratio,
        "epsilon": args.epsilon,
        "seed": args.seed,
        "mode": args.mode,
        "per_tau": [],
    }
    for tau in args.taus:
        config = _config_from_args(args, tau=tau)
        visibles: list[np.ndarray] = []
        greedy_counts: list[int] = []
        log_dets: list[float] = []
        similarities: list[float] = []
        for t in range(args.trials):
            rng = np.random.default_rng(derived_seed(args.seed, t))
            result = generate_mask(features, config, rng=rng, grid=grid)
            v = result.visible
            visibles.append(v)
            greedy_counts.append(result.greedy_count)
            log_dets.append(log_det(submatrix(kmat, v), jitter=1e-12))
            if len(v) >= 2:
                block = kmat.entries[np.ix_(v, v)]
                off = block[~np.eye(len(v), dtype=bool)]
                similarities.append(float(np.mean(off)))
        entry = {
            "tau": tau,
            "k": int(len(visibles[0])),
            "mean_greedy_count": float(np.mean(greedy_counts)),
            "mean_log_det": float(np.mean(log_dets)),
        }
        if similarities:
            entry["mean_pairwise_similarity"] = float(np.mean(similarities))
        if args.trials >= 2:
            entry["mean_pairwise_jaccard"] = _pairwise_jaccard_distance(visibles)
            entry["var_greedy_count"] = float(np.var(greedy_counts))
            entry["var_log_det"] = float(np.var(log_dets))
        report["per_tau"].append(entry)

    print(_canonical(report))
    return 0


# ---------------------------------------------------------------------------
# bench


def _timed(fn, trials: int) -> dict:
    fn()  # untimed warmup pass
    times = []
    for _ in range(trials):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1000.0)
    return {
        "mean_ms": round(float(np.mean(times)), 4),
        "median_ms": round(float(np.median(times)), 4),
    }


def cmd_bench(args: argparse.Namespace) -> int:
    warmup()
    cases = [(12, 3), (64, 16), (196, 49)]
    dim = 256
    report = {"schema_version": 1, "trials": args.trials, "numba_available": HAVE_NUMBA, "cases": []}
    for ci, (n, k) in enumerate(cases):
        # normal rows are near-orthogonal after normalization, so tau=0.8
        # keeps greedy running for all k steps: the honest worst case
        feats = FeatureMatrix(np.random.default_rng(derived_seed(args.seed, ci)).normal(size=(n, dim)))
        ratio = 1.0 - k / n

        def run(tau: float) -> None:
            config = MaskConfig(mask_ratio=ratio, tau=tau, seed=args.seed, mode="feature")
            generate_mask(feats, config, rng=np.random.default_rng(args.seed))

        entry = {"n": n, "k": k}
        entry["greedy"] = _timed(lambda: run(0.8), args.trials)
        entry["random"] = _timed(lambda: run(1.0), args.trials)
        entry["greedy_random_ratio"] = round(
            entry["greedy"]["median_ms"] / max(entry["random"]["median_ms"], 1e-9), 4
        )

        ens = gaussian_kernel(feats)
        if math.comb(n, k) <= enum_budget():
            entry["exact_map"] = _timed(lambda: exact_map(ens, k), args.trials)
        else:
            entry["exact_map"] = {
                "skipped": f"instance too large: C({n},{k}) exceeds the enumeration budget"
            }

        backends = {}
        for backend in ("numpy", "numba") if HAVE_NUMBA else ("numpy",):
            previous = set_active_backend(backend)
            try:
                backends[backend] = _timed(lambda: run(0.8), args.trials)
            finally:
                set_active_backend(previous)
        entry["backends"] = backends

        report["cases"].append(entry)

    print(_canonical(report))
    return 0


# ---------------------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate_args(parser, args)
    handlers = {"mask": cmd_mask, "verify": cmd_verify, "stats": cmd_stats, "bench": cmd_bench}
    try:
        return handlers[args.command](args)
    except DppMaskError as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
