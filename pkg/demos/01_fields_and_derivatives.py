"""Sine-MLP fields and their analytic derivatives, checked against finite
differences. Run: python demos/01_fields_and_derivatives.py"""

import numpy as np

from lumifield.fields import (
    FieldNetwork,
    RadianceField,
    SdfField,
    directional_second_derivative,
    init_siren,
    input_gradient,
    pretrain_sphere,
)

rng = np.random.default_rng(0)

# -- a small sine network and its input Jacobian ----------------------------
net = FieldNetwork([3, 24, 24, 2], activation="sine", dtype=np.float64)
init_siren(net, omega0=2.0, rng=1)
x = rng.uniform(-1, 1, size=3)
jac = input_gradient(net, x)
h = 1e-4
fd = np.stack([(net.forward(x + h * e) - net.forward(x - h * e)) / (2 * h)
               for e in np.eye(3)], axis=1)
print("Jacobian vs central differences, max abs diff:",
      np.max(np.abs(jac - fd)))

# -- second derivatives are exact too (sine is C-infinity) ------------------
lap = directional_second_derivative(net, x, subset=[0, 1, 2])
fd2 = sum((net.forward(x + 1e-3 * e) - 2 * net.forward(x)
           + net.forward(x - 1e-3 * e)) / 1e-6 for e in np.eye(3))
print("Laplacian vs second differences:   ", np.max(np.abs(lap - fd2)))

# -- pretrain an SDF to the half-radius sphere -------------------------------
sdf = SdfField(hidden=48, n_hidden=3, rng=2)
print("pretraining the SDF to a sphere of radius 0.5 ...")
pretrain_sphere(sdf, radius=0.5, steps=600, rng=3)
probe = np.array([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [0.0, 0.0, 0.9]])
print("f at center/surface/outside:", np.round(sdf.f(probe), 4))
print("gradient at (0.7,0,0):      ", np.round(sdf.gradient(np.array([[0.7, 0, 0]]))[0], 3))

# -- the radiance field consumes position, direction, normal, feature --------
rad = RadianceField(feature_dim=48, hidden=32, n_hidden=2, rng=4)
x = np.array([[0.0, 0.0, 0.5]])
d = np.array([[0.0, 0.0, -1.0]])
n = np.array([[0.0, 0.0, 1.0]])
z = sdf.value_grad_feature(x)[2]
print("radiance sample:", np.round(rad.eval(x, d, n, z, clamp=True)[0], 4))
print("angular Laplacian shape:", rad.angular_laplacian(x, d, n, z).shape)
