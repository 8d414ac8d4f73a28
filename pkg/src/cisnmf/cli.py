"""Command-line driver: dictionary learning, separation, evaluation,
model-fit checking and distribution sampling.

Every command is deterministic under --seed.  Option precedence is
flags > config file > defaults; the config file is flat UTF-8
``key = value`` lines keyed by the long option names (dashes or
underscores).  On failure, files written so far are removed and the exit
code is nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np
from scipy import stats

from . import em, metrics, nmf, sinusoid, wiener
from .circular import anisotropy_params, chi2_normalize, rvm_moments, sample_ag, sample_rvm
from .signal_io import StftConfig, Waveform, istft, read_wav, stft, write_wav

#: Per-method kappa defaults when --kappa is not given.
METHOD_KAPPA = {"cisnmf": 0.5, "wiener": 0.0, "aw": 1.0}


def _window_samples(window_ms: float, sample_rate: int, override) -> int:
    """Map a window duration to the nearest power-of-two sample count.

    92 ms at 44100 Hz lands on 4096 samples (2049 bins).  A --window-samples
    override wins when given.
    """
    if override is not None:
        return int(override)
    raw = window_ms * 1e-3 * sample_rate
    return int(2 ** round(np.log2(raw)))


def _stft_config(args, sample_rate: int) -> StftConfig:
    n = _window_samples(args.window_ms, sample_rate, args.window_samples)
    hop = max(1, int(round(n * args.hop_fraction)))
    return StftConfig(window_length=n, hop=hop)


def _add_stft_flags(p):
    p.add_argument("--window-ms", type=float, default=92.0,
                   help="analysis window duration (rounded to a power of two)")
    p.add_argument("--window-samples", type=int, default=None,
                   help="explicit window length; overrides --window-ms")
    p.add_argument("--hop-fraction", type=float, default=0.25,
                   help="hop as a fraction of the window (0.25 = 75%% overlap)")


class _Run:
    """Tracks written files so a failed command can clean up after itself."""

    def __init__(self):
        self.written = []

    def write_wav(self, w, path):
        write_wav(w, path)
        self.written.append(Path(path))

    def write_text(self, text, path):
        Path(path).write_text(text, encoding="utf-8")
        self.written.append(Path(path))

    def cleanup(self):
        for p in self.written:
            p.unlink(missing_ok=True)


def _config_echo(args) -> dict:
    echo = {}
    for key, value in sorted(vars(args).items()):
        if key in ("func", "config"):
            continue
        if isinstance(value, Path):
            value = str(value)
        elif isinstance(value, list):
            value = [str(v) for v in value]
        echo[key] = value
    return echo


def cmd_learn(args, run: _Run) -> None:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for idx, path in enumerate(args.sources):
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"source file not found: {path}")
        w = read_wav(path)
        spec = stft(w, _stft_config(args, w.sample_rate))
        W = nmf.learn_dictionary(spec, args.rank, args.iters,
                                 seed=args.seed + idx)
        dest = out_dir / f"dict_{path.stem}.txt"
        nmf.save_dictionary(W, dest)
        run.written.append(dest)
        print(f"wrote {dest} ({W.shape[0]} x {W.shape[1]})")


def _load_dictionaries(paths):
    names, dicts = [], []
    for p in paths:
        p = Path(p)
        if not p.exists():
            raise FileNotFoundError(f"dictionary not found: {p}")
        name = p.stem
        if name.startswith("dict_"):
            name = name[len("dict_"):]
        names.append(name)
        dicts.append(nmf.load_dictionary(p))
    return names, dicts


def _check_bins(spec, dicts):
    F = spec.data.shape[0]
    for W in dicts:
        if W.shape[0] != F:
            raise ValueError(
                f"mixture STFT has {F} bins but dictionary has {W.shape[0]}"
            )


def cmd_separate(args, run: _Run) -> None:
    mix_path = Path(args.mixture)
    if not mix_path.exists():
        raise FileNotFoundError(f"mixture file not found: {mix_path}")
    w = read_wav(mix_path)
    cfg_stft = _stft_config(args, w.sample_rate)
    x = stft(w, cfg_stft)
    names, dicts = _load_dictionaries(args.dicts)
    _check_bins(x, dicts)

    kappa = args.kappa if args.kappa is not None else METHOD_KAPPA[args.method]
    cfg = em.EmConfig(
        kappa=kappa,
        tau=args.tau,
        em_iters=args.em_iters,
        warm_start_iters=args.warm_start_iters,
        seed=args.seed,
        peak_threshold_db=args.peak_threshold_db,
        update_w=bool(args.blind),
        update_last_frame=not args.phase_skip_last_frame,
        n_inner=args.n_inner,
    )

    tic = time.perf_counter()
    report = None
    if args.method == "cisnmf":
        _, estimates, report = em.run_complex_isnmf(x, dicts, cfg, names=names)
    elif args.method == "wiener":
        if args.variance_updates == "em":
            _, estimates, report = em.run_isotropic_em(x, dicts, cfg)
        else:
            fit = em.warm_start(np.maximum(np.abs(x.data) ** 2, nmf.EPS),
                                dicts, args.variance_iters, seed=args.seed)
            estimates = wiener.wiener_filter(x, [f.v for f in fit])
    elif args.method == "aw":
        fit = em.warm_start(np.maximum(np.abs(x.data) ** 2, nmf.EPS),
                            dicts, args.variance_iters, seed=args.seed)
        models = []
        mix0 = np.angle(x.data[:, 0])
        for fac, name in zip(fit, names):
            nu = sinusoid.estimate_frequencies(fac.v, args.peak_threshold_db)
            mu = sinusoid.unwrap_phases(mix0, nu, cfg_stft.hop)
            models.append(em.SourceModel(fac, mu, nu, name))
        estimates = wiener.anisotropic_wiener(x, models, kappa)
    else:
        raise ValueError(f"unknown method {args.method!r}")
    elapsed = time.perf_counter() - tic

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for name, est in zip(names, estimates):
        dest = out_dir / f"est_{name}.wav"
        run.write_wav(istft(est), dest)
        outputs.append(str(dest))

    manifest = {
        "command": "separate",
        "config": _config_echo(args),
        "seed": args.seed,
        "kappa": kappa,
        "objective_trace": report.objective if report else [],
        "q_clamp_count": report.q_clamp_count if report else 0,
        "outputs": outputs,
        "timings": {
            "total_seconds": elapsed,
            "iter_seconds": report.iter_seconds if report else [],
        },
    }
    dest = Path(args.manifest) if args.manifest else out_dir / "manifest.json"
    run.write_text(json.dumps(manifest, indent=2) + "\n", dest)
    print(f"wrote {len(outputs)} estimates and {dest}")


def _pair_by_name(est_paths, ref_paths):
    if len(est_paths) != len(ref_paths):
        raise ValueError(
            f"{len(est_paths)} estimates vs {len(ref_paths)} references"
        )
    refs = {Path(p).stem: Path(p) for p in ref_paths}
    pairs = []
    for p in est_paths:
        stem = Path(p).stem
        key = stem[len("est_"):] if stem.startswith("est_") else stem
        if key not in refs:
            raise ValueError(f"no reference matching estimate name {stem!r}")
        pairs.append((key, Path(p), refs.pop(key)))
    return pairs


def cmd_eval(args, run: _Run) -> None:
    pairs = _pair_by_name(args.estimates, args.references)
    names, est, ref = [], [], []
    for name, ep, rp in pairs:
        names.append(name)
        est.append(read_wav(ep).samples)
        ref.append(read_wav(rp).samples)
    lengths = {len(e) for e in est} | {len(r) for r in ref}
    if len(lengths) > 1:
        print(f"warning: trimming signals to {min(lengths)} samples",
              file=sys.stderr)
    scores = metrics.bss_eval(est, ref, names=names)
    payload = json.dumps(metrics.scores_to_dict(scores), indent=2) + "\n"
    if args.out:
        run.write_text(payload, args.out)
    else:
        sys.stdout.write(payload)


def _ks_to_chi2(y: np.ndarray) -> float:
    y = np.sort(np.asarray(y, dtype=float).ravel())
    n = y.size
    cdf = stats.chi2.cdf(y, df=2)
    upper = np.abs(np.arange(1, n + 1) / n - cdf)
    lower = np.abs(np.arange(0, n) / n - cdf)
    return float(np.maximum(upper, lower).max())


def cmd_fit_check(args, run: _Run) -> None:
    w = read_wav(Path(args.mixture))
    cfg_stft = _stft_config(args, w.sample_rate)
    x = stft(w, cfg_stft)
    names, dicts = _load_dictionaries(args.dicts)
    _check_bins(x, dicts)
    true_phases = []
    for p in args.sources:
        s = read_wav(Path(p))
        true_phases.append(np.angle(stft(s, cfg_stft).data))
    if len(true_phases) != len(dicts):
        raise ValueError(
            f"{len(true_phases)} sources vs {len(dicts)} dictionaries"
        )

    kappas = [float(k) for k in args.kappas.split(",")]
    edges = np.linspace(0.0, args.max_y, args.bins + 1)
    rows = []
    for kappa in kappas:
        cfg = em.EmConfig(
            kappa=kappa, tau=0.0,
            em_iters=args.em_iters, warm_start_iters=args.warm_start_iters,
            seed=args.seed, peak_threshold_db=args.peak_threshold_db,
        )
        models, _, _ = em.run_complex_isnmf(
            x, dicts, cfg, names=names, initial_phases=true_phases)
        coeffs = anisotropy_params(kappa)
        mix = em.mix_moments([em.ag_moments(m, coeffs) for m in models])
        y = chi2_normalize(x.data, mix.m, mix.gamma, mix.c)
        hist, _ = np.histogram(y.ravel(), bins=edges)
        density = hist / (y.size * (edges[1] - edges[0]))
        rows.append([kappa, _ks_to_chi2(y)] + list(density))

    header = ["kappa", "ks"] + [f"h{i:02d}" for i in range(args.bins)]
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(f"{v:.10g}" for v in row))
    payload = "\n".join(lines) + "\n"
    if args.out:
        run.write_text(payload, args.out)
    else:
        sys.stdout.write(payload)


def cmd_sample(args, run: _Run) -> None:
    if args.model == "rvm":
        samples = sample_rvm(args.v, args.mu, args.kappa, args.n, seed=args.seed)
    else:
        coeffs = anisotropy_params(args.kappa)
        m, gamma, c = rvm_moments(args.v, args.mu, coeffs)
        samples = sample_ag(m, gamma, c, args.n, seed=args.seed)
    lines = ["re,im"] + [f"{s.real:.17g},{s.imag:.17g}" for s in samples]
    payload = "\n".join(lines) + "\n"
    if args.out:
        run.write_text(payload, args.out)
    else:
        sys.stdout.write(payload)


def _coerce(text: str):
    low = text.strip()
    if low.lower() in ("true", "false"):
        return low.lower() == "true"
    for cast in (int, float):
        try:
            return cast(low)
        except ValueError:
            pass
    return low


def _apply_config_file(parser, argv):
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config", default=None)
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    overrides = {}
    for line in Path(known.config).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line: {line!r}")
        key, value = line.split("=", 1)
        overrides[key.strip().replace("-", "_")] = _coerce(value)
    parser.set_defaults(**overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cisnmf",
        description="Phase-aware monaural source separation toolkit",
    )
    parser.add_argument("--config", default=None,
                        help="flat key = value file supplying option defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn", help="learn spectral dictionaries from "
                                     "isolated sources")
    p.add_argument("sources", nargs="+", help="one WAV per source")
    p.add_argument("--rank", type=int, default=50)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    _add_stft_flags(p)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("separate", help="separate a mixture with learned "
                                        "dictionaries")
    p.add_argument("--mixture", required=True)
    p.add_argument("--dicts", nargs="+", required=True)
    p.add_argument("--method", choices=("cisnmf", "wiener", "aw"),
                   default="cisnmf")
    p.add_argument("--kappa", type=float, default=None,
                   help="phase concentration (default 0.5 for cisnmf, "
                        "1.0 for aw)")
    p.add_argument("--tau", type=float, default=5.0)
    p.add_argument("--warm-start-iters", type=int, default=50)
    p.add_argument("--em-iters", type=int, default=100)
    p.add_argument("--variance-iters", type=int, default=150,
                   help="ISNMF iterations for the wiener/aw variance fit")
    p.add_argument("--variance-updates", choices=("mu", "em"), default="mu",
                   help="wiener variance engine: multiplicative or EM")
    p.add_argument("--n-inner", type=int, default=1)
    p.add_argument("--peak-threshold-db", type=float,
                   default=sinusoid.DEFAULT_THRESHOLD_DB)
    p.add_argument("--phase-skip-last-frame", action="store_true",
                   help="leave the final frame's phase at its initialization")
    p.add_argument("--blind", action="store_true",
                   help="also update dictionaries on the mixture")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--manifest", default=None)
    _add_stft_flags(p)
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("eval", help="score estimates against references")
    p.add_argument("--estimates", nargs="+", required=True)
    p.add_argument("--references", nargs="+", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fit-check", help="chi-squared fit of the normalized "
                                         "mixture under the fitted model")
    p.add_argument("--mixture", required=True)
    p.add_argument("--sources", nargs="+", required=True,
                   help="isolated sources supplying the true phases")
    p.add_argument("--dicts", nargs="+", required=True)
    p.add_argument("--kappas", default="0,0.5,1,5")
    p.add_argument("--warm-start-iters", type=int, default=50)
    p.add_argument("--em-iters", type=int, default=50)
    p.add_argument("--bins", type=int, default=64)
    p.add_argument("--max-y", type=float, default=12.0)
    p.add_argument("--peak-threshold-db", type=float,
                   default=sinusoid.DEFAULT_THRESHOLD_DB)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    _add_stft_flags(p)
    p.set_defaults(func=cmd_fit_check)

    p = sub.add_parser("sample", help="draw RVM or AG samples as CSV")
    p.add_argument("--model", choices=("rvm", "ag"), default="rvm")
    p.add_argument("--v", type=float, default=1.0)
    p.add_argument("--mu", type=float, default=np.pi / 3)
    p.add_argument("--kappa", type=float, default=50.0)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sample)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    _apply_config_file(parser, argv)
    args = parser.parse_args(argv)
    run = _Run()
    try:
        args.func(args, run)
    except Exception as exc:
        run.cleanup()
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
