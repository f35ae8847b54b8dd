"""Fit the eight held-out attack models on an easy and a hopeless target.

Every attacker should recover a linear function of the features almost
perfectly and score near zero against pure noise.
"""

import numpy as np

from pcal.attackers import build_evaluation_suite, r_squared

rng = np.random.default_rng(3)
x_train, x_eval = rng.normal(size=(800, 4)), rng.normal(size=(200, 4))
w = np.array([1.0, -2.0, 0.5, 0.0])
easy_train, easy_eval = x_train @ w, x_eval @ w
noise_train, noise_eval = rng.normal(size=800), rng.normal(size=200)

print(f"{'attacker':<14} {'linear target':>14} {'pure noise':>12}")
for name, model in build_evaluation_suite(4, seed=1):
    model.fit(x_train, easy_train)
    easy = r_squared(model.predict(x_eval), easy_eval)
    model.fit(x_train, noise_train)
    hopeless = r_squared(model.predict(x_eval), noise_eval)
    print(f"{name:<14} {easy:>14.3f} {hopeless:>12.3f}")
