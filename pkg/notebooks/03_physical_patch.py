# %% [markdown]
# # Back to the physical plane
#
# x is integrated along minus characteristics from the arc; r and theta are
# carried by the march. The result is the supersonic patch bounded by the
# arc, the sonic curve and the closing minus characteristic.

# %%
import numpy as np

from sonicpatch import inversion as I
from sonicpatch import pipeline as pl
from sonicpatch import solver as S

ref = pl.setup(pl.parse_config(pl.REFERENCE_CONFIG))
fld = S.march(ref.region, S.SolverConfig(n_levels=200))
xs = I.x_field(fld)
sol = I.physical_fields(fld, xs)
print(f"x in [{sol.x.min():.4f}, {sol.x.max():.4f}], r in [{sol.r.min():.4f}, {sol.r.max():.4f}]")

# %%
rep = I.injectivity_check(fld, xs)
print("monotone levels:", rep.monotone, " duplicate cells:", rep.collisions, " min j:", sol.j.min())

# %% [markdown]
# The sonic curve starts at the sonic point of the arc.

# %%
sc = sol.sonic
print(np.column_stack([sc.psi, sc.x, sc.r])[::len(sc.psi) // 6])

# %% [markdown]
# The closing curve leaves the sonic curve and lands on the arc; its chord
# slopes follow the minus characteristic direction.

# %%
df = sol.df
print(f"D = ({df.x[0]:.5f}, {df.r[0]:.5f}), F = ({df.x[-1]:.5f}, {df.r[-1]:.5f})")
print("max interior slope error:", I.df_slope_error(df))

# %%
cols, (nx, nr, bounds) = I.raster(sol, 40, 20)
inside = np.isfinite(cols["theta"])
print(f"{inside.sum()} of {nx * nr} raster cells inside the patch")
