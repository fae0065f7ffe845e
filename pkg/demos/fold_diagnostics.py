import numpy as np

from qcreg import QCMap, SynthConfig, build_grid_mesh, fold_report, gen_random_mu
from qcreg import jacobian_beltrami_check, solve_lbs, square_to_faces

n = 64
mesh = build_grid_mesh(n)

# Folding as the field gets stronger
for m in (0.3, 0.6, 0.8, 0.9, 0.95):
    folded = 0
    for seed in range(40):
        mu = gen_random_mu(SynthConfig(seed=seed, size=n, max_norm=m))
        q = solve_lbs(mesh, square_to_faces(mu, mesh))
        folded += fold_report(mesh, q).n_folded > 0
    print(f"sup |mu| = {m:.2f}: {folded}/40 maps with a folded face")

# A hand-made fold: push one interior vertex across its neighbour
pos = QCMap.identity(n).positions.copy()
pos[30 * n + 30, 0] += 3.0 / (n - 1)
rep = fold_report(mesh, QCMap(n, pos), keep_per_face=True)
print(rep.to_json(indent=None)[:120], "...")
print("folded faces:", np.flatnonzero(rep.per_face_det <= 0))

# det J = |f_z|^2 (1 - |mu|^2) holds face by face for any piecewise linear map
print("Jacobian/Beltrami gap:", jacobian_beltrami_check(mesh, QCMap(n, pos)))
