"""Print the parameter / mult-add tables for the shipped baselines and every
compactness setting applied to the 8-layer baseline."""

import argparse
from importlib.resources import files

from wsnet.config import parse_config
from wsnet.cost import (COMPACTNESS_SETTINGS, compare_setting, format_notes, network_report,
                        report_table)


def load(name):
    return parse_config(files("wsnet.configs").joinpath(name).read_text())[0]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--input-len", type=int, default=441000)
    args = ap.parse_args()

    for name, length in (("baseline1.cfg", None), ("baseline2.cfg", args.input_len)):
        report = network_report(load(name), length)
        print(f"== {name}")
        print(report_table(report))
        if report.notes:
            print(format_notes(report.notes))
        print()

    spec = load("baseline2.cfg")
    print(f"{'setting':<10}{'params':>12}{'size x':>9}{'madds x':>9}{'size x (8-bit)':>16}")
    for setting in COMPACTNESS_SETTINGS:
        cmp = compare_setting(spec, setting, args.input_len)
        q = compare_setting(spec, setting, args.input_len, quantized=True)
        print(f"{setting:<10}{cmp.model.params:>12}{cmp.size_ratio:>9.1f}"
              f"{cmp.multadds_ratio:>9.1f}{q.size_ratio:>16.1f}")


if __name__ == "__main__":
    main()
