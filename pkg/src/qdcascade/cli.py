"""Command-line interface tying simulation to analysis.

Two top-level commands:

    qdcascade simulate CONFIG OUT.qdtt [--threads N] [--seed S]
    qdcascade analyze SUBCOMMAND ...

Analysis subcommands: g2, contrast, tomo, fit-decay, fit-rabi, fit-fss,
fit-lorentzian, predict, yield.  Randomized commands never seed from the
clock; the seed always comes from the config file or an explicit --seed.
All outputs are reproducible byte-for-byte for identical inputs and seeds.
"""

import argparse
import json
import sys

import numpy as np

from . import cascade, correlate, fitting, tomography
from .config import load_config
from .correlate import Measurement
from .qdtt import read_qdtt, write_qdtt
from .simulate import simulate
from .states import bell_psi_plus, concurrence, density_matrix_to_text, fidelity


def _read_xy_csv(path, min_columns=2):
    """Read numeric CSV columns x,y[,yerr], skipping '#' comments and headers."""
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split(",")
            try:
                rows.append([float(f) for f in fields])
            except ValueError:
                if rows:
                    raise ValueError(f"{path}: line {lineno}: non-numeric row") from None
                continue  # header row
            if len(fields) < min_columns:
                raise ValueError(
                    f"{path}: line {lineno}: expected >= {min_columns} columns"
                )
    if not rows:
        raise ValueError(f"{path}: no numeric data rows")
    width = min(len(r) for r in rows)
    data = np.array([r[:width] for r in rows])
    return [data[:, i] for i in range(width)]


def _write_fit_report(result, path):
    lines = ["parameter,value,stderr"]
    for name, value in result.params.items():
        lines.append(f"{name},{value!r},{result.stderrs[name]!r}")
    lines.append(f"chi2_reduced,{result.chi2_reduced!r},")
    lines.append(f"converged,{int(result.converged)},")
    lines.append(f"n_iterations,{result.n_iterations},")
    lines.append(f"degenerate,{int(result.degenerate)},")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_curve(path, x, y, header="x,y"):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(header + "\n")
        for xi, yi in zip(x, y):
            fh.write(f"{float(xi)!r},{float(yi)!r}\n")


def _print_fit(result):
    for name, value in result.params.items():
        print(f"{name} = {value:.6g} +- {result.stderrs[name]:.3g}")
    print(f"chi2_reduced = {result.chi2_reduced:.4g}  (converged: {result.converged})")
    if result.degenerate:
        print("warning: fitted amplitude is consistent with zero at one sigma")


def _cmd_simulate(args):
    config = load_config(args.config)
    if args.seed is not None:
        from dataclasses import replace

        config = replace(config, seed=args.seed)
    stream = simulate(config, threads=args.threads)
    write_qdtt(args.out, stream)
    print(f"wrote {args.out}: {len(stream)} records, duration {config.duration_s} s, seed {int(config.seed)}")
    for channel, count in sorted(stream.counts_per_channel().items()):
        print(f"  channel {channel}: {count} events")
    return 0


def _cmd_g2(args):
    stream = read_qdtt(args.input)
    hist = correlate.cross_correlate(
        stream.channel_timestamps(args.start_channel),
        stream.channel_timestamps(args.stop_channel),
        args.bin_width,
        args.max_delay,
    )
    window = args.window if args.window is not None else args.rep_period / 2.0
    if args.hist_out:
        correlate.save_histogram(
            hist,
            args.hist_out,
            extra_metadata={"rep_period_ps": args.rep_period, "peak_window_ps": window},
        )
        print(f"wrote histogram to {args.hist_out}")
    value, stderr = correlate.g2_zero(hist, args.rep_period, window)
    print(f"g2(0) = {value:.4f} +- {stderr:.4f}")
    return 0


def _cmd_contrast(args):
    c_lin = Measurement(args.linear, args.linear_err)
    c_diag = Measurement(args.diagonal, args.diagonal_err)
    c_circ = Measurement(args.circular, args.circular_err)
    f, err = correlate.fidelity_from_contrasts(c_lin, c_diag, c_circ)
    print(f"C_linear   = {c_lin.value:+.4f} +- {c_lin.stderr:.4f}")
    print(f"C_diagonal = {c_diag.value:+.4f} +- {c_diag.stderr:.4f}")
    print(f"C_circular = {c_circ.value:+.4f} +- {c_circ.stderr:.4f}")
    print(f"F = {f:.3f} +- {err:.3f}")
    return 0


def _cmd_tomo(args):
    record = tomography.load_record(args.input)
    result = tomography.mle_reconstruct(record)
    rho = result.rho
    if args.k is not None:
        rho = tomography.background_correct(rho, args.k)
    target = bell_psi_plus()
    metrics = {
        "fidelity": fidelity(rho, target),
        "concurrence": concurrence(rho),
        "purity": rho.purity(),
        "eigenvalues": [float(v) for v in rho.eigenvalues()],
        "converged": result.converged,
        "iterations": result.iterations,
        "neg_log_likelihood": result.neg_log_likelihood,
        "background_k": args.k,
    }
    if args.bootstrap:
        if args.seed is None:
            raise ValueError("--bootstrap requires an explicit --seed")
        errs = tomography.bootstrap_errors(
            record, args.bootstrap, args.seed, correct_k=args.k
        )
        metrics["fidelity_stderr"] = errs.fidelity_stderr
        metrics["concurrence_stderr"] = errs.concurrence_stderr
    if args.rho_out:
        with open(args.rho_out, "w", encoding="ascii") as fh:
            fh.write(density_matrix_to_text(rho))
        print(f"wrote density matrix to {args.rho_out}")
    if args.metrics_out:
        with open(args.metrics_out, "w", encoding="ascii") as fh:
            json.dump(metrics, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote metrics to {args.metrics_out}")
    fid_err = metrics.get("fidelity_stderr")
    conc_err = metrics.get("concurrence_stderr")
    fid_suffix = f" +- {fid_err:.3f}" if fid_err is not None else ""
    conc_suffix = f" +- {conc_err:.3f}" if conc_err is not None else ""
    print(f"fidelity = {metrics['fidelity']:.3f}{fid_suffix}")
    print(f"concurrence = {metrics['concurrence']:.3f}{conc_suffix}")
    return 0


def _cmd_fit_decay(args):
    hist = correlate.load_histogram(args.input)
    result = fitting.fit_decay(hist, args.irf_fwhm, species=args.species)
    _print_fit(result)
    if args.report:
        _write_fit_report(result, args.report)
    if args.curve:
        t = hist.delay_centers()
        emitter = cascade.EmitterParams(
            fss_uev=0.0,
            t1_xx_ps=result.params["t1_xx_ps"],
            t1_x_ps=result.params.get("t1_x_ps", result.params["t1_xx_ps"] + 1.0),
            k=1.0,
        )
        det = cascade.DetectorParams(irf_fwhm_ps=args.irf_fwhm)
        shape = cascade.cascade_decay_curve(
            t - result.params["t0_ps"], emitter, det, species=args.species
        )
        model = result.params["amplitude"] * shape + result.params["floor"]
        _write_curve(args.curve, t, model, header="t_ps,model_counts")
    return 0


def _cmd_fit_rabi(args):
    columns = _read_xy_csv(args.input)
    result = fitting.fit_rabi(columns[0], columns[1], yerr=columns[2] if len(columns) > 2 else None)
    _print_fit(result)
    if args.report:
        _write_fit_report(result, args.report)
    if args.curve:
        x = np.linspace(float(np.min(columns[0])), float(np.max(columns[0])), 400)
        model = result.params["amplitude"] * cascade.rabi_population(
            result.params["area_scale"] * x, result.params["gamma"]
        )
        _write_curve(args.curve, x, model, header="pulse_area,model_intensity")
    return 0


def _cmd_fit_fss(args):
    columns = _read_xy_csv(args.input, min_columns=3)
    series = fitting.SpectrumSeries(columns[0], columns[1], columns[2])
    result = fitting.fit_fss(series, convention=args.convention)
    _print_fit(result)
    if args.report:
        _write_fit_report(result, args.report)
    return 0


def _cmd_fit_lorentzian(args):
    columns = _read_xy_csv(args.input)
    result = fitting.fit_lorentzian(
        columns[0], columns[1], yerr=columns[2] if len(columns) > 2 else None
    )
    _print_fit(result)
    if args.report:
        _write_fit_report(result, args.report)
    if args.curve:
        x = np.linspace(float(np.min(columns[0])), float(np.max(columns[0])), 400)
        model = result.params["floor"] + result.params["amplitude"] / (
            1.0 + (x / result.params["width_uev"]) ** 2
        )
        _write_curve(args.curve, x, model, header="fss_uev,model_fidelity")
    return 0


def _cmd_predict(args):
    params = cascade.EmitterParams(
        fss_uev=args.s,
        t1_xx_ps=args.t1xx,
        t1_x_ps=args.t1x,
        k=args.k,
        g1_hv=args.g,
        g1p_hv=args.gp,
    )
    print(f"F = {cascade.predicted_fidelity(params):.3f}")
    return 0


def _cmd_yield(args):
    fraction = fitting.ensemble_yield(
        mean_uev=args.mean,
        sd_uev=args.sd,
        t1_range_ps=(args.t1_min, args.t1_max),
        k=args.k,
        g1_hv=args.g,
        g1p_hv=args.gp,
        n_samples=args.n,
        seed=args.seed,
    )
    print(f"fraction with F > 0.5: {fraction:.4f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qdcascade",
        description="Simulate and analyze entangled photon pairs from a quantum-dot cascade.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run the event simulator, write a QDTT file")
    p_sim.add_argument("config", help="run configuration file")
    p_sim.add_argument("out", help="output QDTT path")
    p_sim.add_argument("--threads", type=int, default=1, help="simulation worker threads")
    p_sim.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_sim.set_defaults(func=_cmd_simulate)

    p_an = sub.add_parser("analyze", help="analysis subcommands")
    an = p_an.add_subparsers(dest="subcommand", required=True)

    p = an.add_parser("g2", help="delay histogram and pulsed g2(0) from a QDTT file")
    p.add_argument("input")
    p.add_argument("--start-channel", type=int, default=0)
    p.add_argument("--stop-channel", type=int, default=1)
    p.add_argument("--bin-width", type=float, default=100.0, help="bin width [ps]")
    p.add_argument("--max-delay", type=float, default=160000.0, help="delay range [ps]")
    p.add_argument("--rep-period", type=float, default=13157.9, help="pulse period [ps]")
    p.add_argument("--window", type=float, default=None, help="peak window [ps]")
    p.add_argument("--hist-out", default=None, help="write histogram CSV here")
    p.set_defaults(func=_cmd_g2)

    p = an.add_parser("contrast", help="fidelity from three basis contrasts")
    p.add_argument("--linear", type=float, required=True)
    p.add_argument("--diagonal", type=float, required=True)
    p.add_argument("--circular", type=float, required=True)
    p.add_argument("--linear-err", type=float, default=0.0)
    p.add_argument("--diagonal-err", type=float, default=0.0)
    p.add_argument("--circular-err", type=float, default=0.0)
    p.set_defaults(func=_cmd_contrast)

    p = an.add_parser("tomo", help="maximum-likelihood tomography from a 16-row CSV")
    p.add_argument("input")
    p.add_argument("--k", type=float, default=None, help="background-correct with this k")
    p.add_argument("--rho-out", default=None, help="write the density matrix here")
    p.add_argument("--metrics-out", default=None, help="write JSON metrics here")
    p.add_argument("--bootstrap", type=int, default=0, help="bootstrap resamples")
    p.add_argument("--seed", type=int, default=None, help="bootstrap seed")
    p.set_defaults(func=_cmd_tomo)

    p = an.add_parser("fit-decay", help="lifetime fit of a histogram CSV")
    p.add_argument("input")
    p.add_argument("--species", choices=("XX", "X"), default="XX")
    p.add_argument("--irf-fwhm", type=float, default=100.0, help="IRF FWHM [ps]")
    p.add_argument("--report", default=None, help="write fit report CSV here")
    p.add_argument("--curve", default=None, help="write model curve CSV here")
    p.set_defaults(func=_cmd_fit_decay)

    p = an.add_parser("fit-rabi", help="Rabi oscillation fit of x,y[,yerr] CSV")
    p.add_argument("input")
    p.add_argument("--report", default=None)
    p.add_argument("--curve", default=None)
    p.set_defaults(func=_cmd_fit_rabi)

    p = an.add_parser("fit-fss", help="splitting fit of alpha,x_center,xx_center CSV")
    p.add_argument("input")
    p.add_argument(
        "--convention",
        choices=("peak-to-peak", "semi-amplitude"),
        default="peak-to-peak",
    )
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_fit_fss)

    p = an.add_parser("fit-lorentzian", help="Lorentzian fit of x,y[,yerr] CSV")
    p.add_argument("input")
    p.add_argument("--report", default=None)
    p.add_argument("--curve", default=None)
    p.set_defaults(func=_cmd_fit_lorentzian)

    p = an.add_parser("predict", help="model fidelity for given dot parameters")
    p.add_argument("--s", type=float, required=True, help="splitting [ueV]")
    p.add_argument("--t1x", type=float, required=True, help="exciton lifetime [ps]")
    p.add_argument("--t1xx", type=float, default=112.0, help="biexciton lifetime [ps]")
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--g", type=float, default=1.0)
    p.add_argument("--gp", type=float, default=1.0)
    p.set_defaults(func=_cmd_predict)

    p = an.add_parser("yield", help="fraction of a dot ensemble with F > 0.5")
    p.add_argument("--mean", type=float, default=4.8, help="splitting mean [ueV]")
    p.add_argument("--sd", type=float, default=2.4, help="splitting sd [ueV]")
    p.add_argument("--t1-min", type=float, default=120.0)
    p.add_argument("--t1-max", type=float, default=220.0)
    p.add_argument("--k", type=float, default=0.97)
    p.add_argument("--g", type=float, default=1.0)
    p.add_argument("--gp", type=float, default=1.0)
    p.add_argument("--n", type=int, default=100000)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=_cmd_yield)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
