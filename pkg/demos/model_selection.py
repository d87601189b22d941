"""Simulate two landmark groups, rank the three models per group, test equal means.

    python demos/model_selection.py
"""

import numpy as np

from polarshape.cli import run_compare, run_test_mean
from polarshape.mc import SamplerConfig, sample_landmarks
from polarshape.models import ModelParams, variant_spec


def simulate(variant, mu, sigma2, n, seed):
    cfg = SamplerConfig(variant_spec(variant, 3, 2), ModelParams(mu, sigma2), n, seed=seed)
    return sample_landmarks(cfg)


def main():
    mu = np.array([[2.0, 0.5], [0.4, 1.5]])
    groups = {
        "heavy": simulate("kotz-t3", mu, 0.5, 80, seed=1),
        "gauss": simulate("gaussian", mu, 1.0, 80, seed=2),
    }

    print("== model ranking by BIC* ==")
    print(run_compare(groups, seed=0).to_text())

    print("\n== equal mean shape, same truth in both groups ==")
    same = run_test_mean(groups["gauss"], simulate("gaussian", mu, 1.0, 80, seed=3), model_choice="gaussian",
                         names=("a", "b"))
    print(same.to_text())

    print("\n== equal mean shape, shifted second group ==")
    shifted = simulate("gaussian", np.array([[0.5, 0.0], [0.0, 2.5]]), 1.0, 80, seed=4)
    print(run_test_mean(groups["gauss"], shifted, model_choice="gaussian", names=("a", "shifted")).to_text())


if __name__ == "__main__":
    main()
