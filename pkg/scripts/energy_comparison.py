#!/usr/bin/env python3
"""Baseline vs weight-locality energy comparison on a benchmark preset.

Runs both schedules through the cycle model with their matching hardware
presets (baseline 4 MB/CU weight memory vs 2 MB/CU for the locality
schedule), accounts energy with the default cost table, and prints the
per-component ratios.  Absolute joules depend entirely on the cost table;
the ratios are the meaningful output.

Usage: python scripts/energy_comparison.py [--preset ldlrnn] [--t 64]
"""
from __future__ import annotations

import argparse
import json

from epursim import arch, energy, presets
from epursim.sched import Policy


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", default="ldlrnn",
                    help="network preset (must fit the per-CU weight memory)")
    ap.add_argument("--t", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--quantize", action="store_true",
                    help="quantize partials in the locality run")
    ap.add_argument("--json", help="write the comparison as JSON")
    args = ap.parse_args()

    net = presets.preset_descriptor(args.preset)
    weights = presets.random_weights(net, args.seed)
    seq = presets.random_sequence(net, args.t, args.seed + 1)
    table = energy.EnergyTable()

    qcfg = None
    if args.quantize:
        alpha = arch.calibrate_network_alpha(net, weights, seq)
        from epursim.quant import QuantConfig
        qcfg = QuantConfig(8, alpha)

    base = arch.simulate(net, weights, seq, Policy.conventional,
                         arch.baseline_config())
    mwl = arch.simulate(net, weights, seq, Policy.mwl, arch.mwl_config(),
                        quant=qcfg)
    e_base = energy.account(base, table)
    e_mwl = energy.account(mwl, table)
    cmp = energy.compare(e_base, e_mwl)

    print(f"{args.preset.upper()}, T={args.t}"
          f"{', quantized partials' if qcfg else ''}\n")
    print(f"{'component':<32} {'baseline J':>12} {'mwl J':>12} {'ratio':>7}")
    for comp, val in sorted(e_base.dynamic_by_component.items()):
        r = cmp.ratios.get(f"dynamic.{comp}")
        got = e_mwl.dynamic_by_component.get(comp, 0.0)
        print(f"dynamic.{comp:<24} {val:>12.3e} {got:>12.3e} "
              f"{r if r is not None else float('nan'):>7.3f}")
    for comp, val in sorted(e_base.leakage_by_component.items()):
        r = cmp.ratios.get(f"leakage.{comp}")
        got = e_mwl.leakage_by_component.get(comp, 0.0)
        print(f"leakage.{comp:<24} {val:>12.3e} {got:>12.3e} "
              f"{r if r is not None else float('nan'):>7.3f}")
    print(f"\n{'total':<32} {e_base.total:>12.3e} {e_mwl.total:>12.3e} "
          f"{cmp.total_ratio:>7.3f}")
    if cmp.regressions:
        print("components where the locality schedule costs more: "
              + ", ".join(cmp.regressions))
    if args.json:
        with open(args.json, "w", encoding="utf-8") as f:
            json.dump({"baseline": e_base.to_json(), "mwl": e_mwl.to_json(),
                       "comparison": cmp.to_json()}, f, indent=2)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
