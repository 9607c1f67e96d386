"""Command-line entry points.

Subcommands: simulate (run a configured acquisition), g2 (delay sweep on a
tag file), tomo (EM reconstruction from no-click JSON), fit (exponential
decay fit of a CSV), dispersion (stripe phase matching), reproduce
(desk-scale figure bundles).  Exit status is nonzero on failure and the
message names the failing stage.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import scenarios, tagio
from .coincidence import g2_curve
from .dispersion import StripeParams, gold_permittivity, grating_period, spp_wavevector
from .fitting import DecaySeries, fit_exponential
from .source import CHANNEL_A, CHANNEL_B1, CHANNEL_B2
from .tomography import em_reconstruct, monte_carlo_errors, noclick_from_json, result_to_json


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plasmonlab")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a configured acquisition end to end")
    sim.add_argument("--config", required=True, help="scenario config JSON")
    sim.add_argument("--seed", type=int, default=None, help="override the config seed")
    sim.add_argument("--out", default=None, help="output directory")

    g2p = sub.add_parser("g2", help="g2(tau) sweep over a time-tag file")
    g2p.add_argument("--tags", required=True, help="binary QTT1 tag file")
    g2p.add_argument("--window-ps", type=int, default=2000)
    g2p.add_argument("--tau-lo-ps", type=int, default=-20000)
    g2p.add_argument("--tau-hi-ps", type=int, default=20000)
    g2p.add_argument("--tau-step-ps", type=int, default=2000)
    g2p.add_argument("--conditional", action="store_true")
    g2p.add_argument("--out", default=None, help="output CSV path (default stdout)")

    tom = sub.add_parser("tomo", help="EM population reconstruction from no-click JSON")
    tom.add_argument("--input", required=True,
                     help='JSON {"etas": [...], "freqs": [...], "trials": [...], "sigma": [...]}')
    tom.add_argument("--n-t", type=int, default=6)
    tom.add_argument("--epsilon", type=float, default=1e-8)
    tom.add_argument("--max-iters", type=int, default=1_000_000)
    tom.add_argument("--mc-trials", type=int, default=0,
                     help="Monte-Carlo error trials (0 = no error bars)")
    tom.add_argument("--seed", type=int, default=0)
    tom.add_argument("--out", default=None, help="output JSON path (default stdout)")

    fit = sub.add_parser("fit", help="exponential decay fit of length_um,counts[,error] CSV")
    fit.add_argument("--input", required=True)
    fit.add_argument("--out", default=None, help="output JSON path (default stdout)")

    disp = sub.add_parser("dispersion", help="stripe wavevector and grating period")
    disp.add_argument("--wavelength-nm", type=float, required=True)
    disp.add_argument("--width-um", type=float, required=True)
    disp.add_argument("--eps-re", type=float, default=None)
    disp.add_argument("--eps-im", type=float, default=0.0)
    disp.add_argument("--material", choices=["gold"], default=None)
    disp.add_argument("--order", type=int, default=1)
    disp.add_argument("--out", default=None, help="output JSON path (default stdout)")

    rep = sub.add_parser("reproduce", help="desk-scale figure bundles")
    rep.add_argument("figure", choices=list(scenarios.FIGURES))
    rep.add_argument("--seed", type=int, default=20120)
    rep.add_argument("--out", default=None, help="output directory (default ./<figure>)")
    return parser


def _emit(text: str, out: str | None):
    if out is None:
        print(text)
    else:
        Path(out).write_text(text + "\n")


def _cmd_simulate(args) -> int:
    cfg = scenarios.load_config(args.config)
    if args.seed is not None:
        cfg = scenarios.config_from_dict(
            {**scenarios.config_to_dict(cfg), "seed": args.seed})
    manifest = scenarios.run_scenario(cfg, args.out)
    if manifest["status"] != "ok":
        print(f"simulate failed in stage {manifest['failed_stage']}: "
              f"{manifest['stages'][manifest['failed_stage']]}", file=sys.stderr)
        return 1
    print(json.dumps(manifest["artifacts"], indent=2))
    return 0


def _cmd_g2(args) -> int:
    streams = tagio.read_tags(args.tags)
    duration = max(s.duration_ps for s in streams.values())
    b1, b2 = streams[CHANNEL_B1], streams[CHANNEL_B2]
    if args.conditional:
        curve = g2_curve((streams[CHANNEL_A], b1, b2), args.window_ps,
                         (args.tau_lo_ps, args.tau_hi_ps), args.tau_step_ps, conditional=True)
    else:
        curve = g2_curve((b1, b2), args.window_ps, (args.tau_lo_ps, args.tau_hi_ps),
                         args.tau_step_ps, conditional=False, integration_time_ps=duration)
    n_a = len(streams[CHANNEL_A]) if CHANNEL_A in streams else 0
    lines = ["tau_ps,g2,stderr,N_A,N_B1,N_B2,N_pairs,N_triples"]
    for p in curve:
        lines.append(f"{p.tau_ps},{p.g2:.10g},{p.stderr:.10g},{n_a},{len(b1)},{len(b2)},"
                     f"{p.n_pairs},{p.n_triples}")
    _emit("\n".join(lines), args.out)
    return 0


def _cmd_tomo(args) -> int:
    data, ladder = noclick_from_json(Path(args.input).read_text())
    result = em_reconstruct(data, ladder, n_t=args.n_t, epsilon=args.epsilon,
                            max_iters=args.max_iters)
    errors = None
    if args.mc_trials:
        errors = monte_carlo_errors(data, ladder, n_t=args.n_t, trials=args.mc_trials,
                                    seed=args.seed)
    _emit(result_to_json(result, errors), args.out)
    return 0


def _cmd_fit(args) -> int:
    rows = np.loadtxt(args.input, delimiter=",", skiprows=1, ndmin=2)
    series = DecaySeries(
        lengths_um=rows[:, 0],
        counts=rows[:, 1],
        count_errors=rows[:, 2] if rows.shape[1] > 2 else None,
    )
    _emit(json.dumps(fit_exponential(series).as_dict(), indent=2), args.out)
    return 0


def _cmd_dispersion(args) -> int:
    if args.material == "gold" or (args.material is None and args.eps_re is None):
        eps = gold_permittivity(args.wavelength_nm)
    else:
        if args.eps_re is None:
            print("dispersion: give --eps-re or --material gold", file=sys.stderr)
            return 2
        eps = complex(args.eps_re, args.eps_im)
    params = StripeParams(args.wavelength_nm, eps, args.width_um)
    doc = {
        "k_sp_per_um": spp_wavevector(params),
        "period_nm": grating_period(params, args.order),
        "eps_re": eps.real,
        "eps_im": eps.imag,
    }
    _emit(json.dumps(doc, indent=2), args.out)
    return 0


def _cmd_reproduce(args) -> int:
    out = args.out or args.figure
    manifest = scenarios.reproduce(args.figure, out, seed=args.seed)
    if manifest["status"] != "ok":
        print(f"reproduce {args.figure} failed in stage {manifest['failed_stage']}: "
              f"{manifest['stages'][manifest['failed_stage']]}", file=sys.stderr)
        return 1
    print(json.dumps(manifest["artifacts"], indent=2))
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "g2": _cmd_g2,
    "tomo": _cmd_tomo,
    "fit": _cmd_fit,
    "dispersion": _cmd_dispersion,
    "reproduce": _cmd_reproduce,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
