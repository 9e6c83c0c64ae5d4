"""Generate a benchmark dataset and punch structured holes into it.

The generator produces a mix of binary and continuous covariates with known
dependence structure and a rare binary outcome; the amputer then applies a
weighted-score missingness plan so that values disappear more often in rows
whose other covariates (and outcome) are extreme — missing at random, not
completely at random.
"""

import numpy as np

from bivsel import (
    DgpSpec,
    Missingness,
    RngHandle,
    ampute,
    build_scenario_plan,
    generate,
    scenario_transforms,
)


def main():
    dgp = DgpSpec(n=2000, seed=7)
    d, truth = generate(dgp)
    print(f"dataset: {d.n} rows x {d.k} covariates "
          f"({sum(1 for k in d.kinds if k.name == 'BINARY')} binary)")
    print(f"outcome prevalence: {d.y.mean():.3f}")
    print(f"truly useful variables: {sorted(truth.useful)}")

    plan = build_scenario_plan(Missingness.PCT30)
    masked = ampute(d, scenario_transforms(), plan, rng=RngHandle(7))

    row_hit = (masked.x_mask.any(axis=1) | masked.y_mask).mean()
    print(f"\nplan target: 30% of rows incomplete -> observed {row_hit:.3f}")
    print(f"outcome missing: {masked.y_mask.mean():.3f} (target 0.15)")
    print("\nper-column missing fractions:")
    for name, frac in zip(masked.names, masked.x_mask.mean(axis=0)):
        if frac > 0:
            print(f"  {name:>4}: {frac:.3f}")

    # values vanish preferentially in rows whose *other* observed values are
    # extreme, so incomplete rows differ systematically from complete ones
    xinc = masked.x_mask.any(axis=1)
    comp = ~xinc & ~masked.y_mask
    print(f"\noutcome rate in rows with masked covariates: {d.y[xinc].mean():.3f}")
    print(f"outcome rate in fully observed rows:         {d.y[comp].mean():.3f}")
    j = d.col_index("x5")
    print(f"x5 mean, rows with masked covariates: {d.x[xinc, j].mean():+.3f}")
    print(f"x5 mean, fully observed rows:         {d.x[comp, j].mean():+.3f}")
    print("dropping incomplete rows would bias any downstream analysis")


if __name__ == "__main__":
    main()
