"""Verify the dense-net backward pass against central finite differences.

Perturbs every weight, every bias, and every input entry of a small net by
h=1e-5 and compares the measured slope with what backward() returns.
"""

import numpy as np

from pcal import nn

net = nn.init_net(nn.NetShape([3, 8, 5, 2], output_activation="sigmoid"), seed=11)
rng = np.random.default_rng(0)
x = rng.normal(size=(4, 3))
g_out = rng.normal(size=(4, 2))     # objective J = sum(g_out * output)

out, cache = nn.forward(net, x)
param_grads, gx = nn.backward(net, cache, g_out)


def objective():
    y, _ = nn.forward(net, x)
    return float(np.sum(g_out * y))


h = 1e-5
worst = 0.0
checked = 0
for layer, (dw, db) in enumerate(param_grads):
    for arr, grad in ((net.weights[layer], dw), (net.biases[layer], db)):
        flat, gflat = arr.ravel(), grad.ravel()
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = objective()
            flat[i] = keep - h
            down = objective()
            flat[i] = keep
            numeric = (up - down) / (2 * h)
            err = abs(numeric - gflat[i]) / max(abs(numeric), abs(gflat[i]), 1.0)
            worst = max(worst, err)
            checked += 1

for i in range(x.size):
    keep = x.ravel()[i]
    x.ravel()[i] = keep + h
    up = objective()
    x.ravel()[i] = keep - h
    down = objective()
    x.ravel()[i] = keep
    numeric = (up - down) / (2 * h)
    err = abs(numeric - gx.ravel()[i]) / max(abs(numeric), abs(gx.ravel()[i]), 1.0)
    worst = max(worst, err)
    checked += 1

print(f"checked {checked} partial derivatives, max relative error {worst:.2e}")
assert worst < 1e-4
