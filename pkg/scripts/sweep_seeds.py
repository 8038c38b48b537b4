"""Seed sensitivity of the BRW campaign statistics behind criteria 6 to 9.

Runs the shared campaign for several seeds and prints the per-seed values,
so a single pass/fail can be read against its spread.

    python3 scripts/sweep_seeds.py --seeds 1 2 3 --workers 4
"""
import argparse

from sebrw import acceptance as acc


def main() -> None:
    p = argparse.ArgumentParser()
    p.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()
    print("seed  lln_dev_n20  ks_n20  chi2_p_n20  pow2_n20  anyB_n20  H1med_n20")
    for seed in args.seeds:
        camp = acc.binary_campaign(seed, args.workers)
        c6, c7 = acc.criterion_6(camp, 0.0), acc.criterion_7(camp, 0.0)
        c8, c9 = acc.criterion_8(camp, seed), acc.criterion_9(camp)
        val = {c.name: c.value for r in (c6, c7, c8, c9) for c in r.checks}
        print(f"{seed:<5} {val['deviation_n20']:.4f}       {val['ks_n20']:.4f}  "
              f"{val['chi2_window_count_p_n20']:.2e}    {val['power_of_two_fraction_n20']:.3f}     "
              f"{val['any_B_fraction_n20']:.3f}     {c9.details['H1_median'][20]:.3f}")


if __name__ == "__main__":
    main()
