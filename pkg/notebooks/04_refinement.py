# %% [markdown]
# # Refinement study
#
# Three grids, each doubling the level count. The same check suite backs
# `sonicpatch verify`.

# %%
from sonicpatch import pipeline as pl
from sonicpatch import solver as S
from sonicpatch import verify as V

ref = pl.setup(pl.parse_config(pl.REFERENCE_CONFIG))
fields = [S.march(ref.region, S.SolverConfig(n_levels=n)) for n in (50, 100, 200)]
other = S.march(ref.region, S.SolverConfig(n_levels=200, form="reciprocal"))

# %%
reports = V.run_all(fields, ref.params, reciprocal=other)
for r in reports:
    print(f"{r.status:7s} {r.name:50s} {r.detail}")

# %% [markdown]
# Hoelder quotients on their own, for the deepest level of the finest grid.

# %%
print(V.holder_hodograph(fields[-1]))
