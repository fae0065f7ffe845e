import numpy as np

from qcreg import build_grid_mesh, gen_random_mu, mu_from_map, solve_lbs, square_to_faces
from qcreg import SynthConfig, fold_report, laplacian_residual

# A smooth random Beltrami field on a 64 x 64 grid
n = 64
mesh = build_grid_mesh(n)
mu = gen_random_mu(SynthConfig(seed=3, size=n, max_norm=0.5, bandwidth=8))
faces = square_to_faces(mu, mesh)
print("sup |mu|:", np.abs(mu).max())

# Reconstruct the map and look at how far it moves the grid
qcmap = solve_lbs(mesh, faces)
shift = np.linalg.norm(qcmap.positions - mesh.vertices, axis=1)
print("max vertex displacement:", shift.max())
print("residual of the solved system:", laplacian_residual(mesh, faces, qcmap))

# The corners stay put
corners = [0, n - 1, n * n - n, n * n - 1]
print("corners:\n", qcmap.positions[corners])

# Recover mu from the map itself
back = mu_from_map(mesh, qcmap)
err = np.linalg.norm(back - faces) / np.linalg.norm(faces)
print("relative mu round-trip error:", round(err, 4))

# Refining the grid shrinks the discretisation part of that error
for m in (32, 64, 128):
    mm = build_grid_mesh(m)
    f = square_to_faces(gen_random_mu(SynthConfig(seed=3, size=m, max_norm=0.5, bandwidth=8)), mm)
    q = solve_lbs(mm, f)
    print(m, np.linalg.norm(mu_from_map(mm, q) - f) / np.linalg.norm(f), fold_report(mm, q).n_folded)
