import numpy as np

from qcreg import QCMap, SynthConfig, build_grid_mesh, compress, dft2, fold_report
from qcreg import gen_random_mu, idft2, solve_lbs, square_to_faces
from qcreg.spectral import lowpass_mask

n = 64
mesh = build_grid_mesh(n)

# A rough field: wide band, large modulus
mu = gen_random_mu(SynthConfig(seed=11, size=n, max_norm=0.8, bandwidth=40))
spec = dft2(mu)
print("energy in the 14 x 14 low block:",
      np.sum(np.abs(dft2(compress(mu, 14))) ** 2) / np.sum(np.abs(spec) ** 2))

# Truncating the spectrum of mu keeps |mu| < 1, so the map stays a homeomorphism
for keep in (4, 8, 14, 32, 64):
    c = compress(mu, keep)
    q = solve_lbs(mesh, square_to_faces(c, mesh))
    rep = fold_report(mesh, q)
    print(f"keep={keep:2d}  |mu - c|/|mu| = {np.linalg.norm(mu - c) / np.linalg.norm(mu):.3f}"
          f"  sup|c| = {np.abs(c).max():.3f}  N_J = {rep.n_folded}")

# Truncating the coordinate functions instead carries no such guarantee
q = solve_lbs(mesh, square_to_faces(mu, mesh))
for keep in (4, 8, 14):
    mask = lowpass_mask(n, keep)
    u = idft2(dft2(q.u.reshape(n, n)) * mask).real
    v = idft2(dft2(q.v.reshape(n, n)) * mask).real
    rep = fold_report(mesh, QCMap.from_grids(u, v))
    print(f"coordinate truncation keep={keep:2d}: N_J = {rep.n_folded}")
