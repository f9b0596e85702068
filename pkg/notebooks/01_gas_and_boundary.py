# %% [markdown]
# # Gas law, supersonic branch and boundary data
#
# The reference gas is p = rho^2/4 with the sonic state at rho = q = 0.5.
# Everything downstream sees the gas only through the branch t -> state,
# where t is the cosine of the Mach angle and t = 0 is sonic.

# %%
import numpy as np

from sonicpatch import boundary as B
from sonicpatch import eos as E
from sonicpatch import pipeline as pl

eos = E.quadratic_eos()
consts = E.sonic_normalized_constants(eos, 0.5)
print(f"m = {consts.m:.6f}  mg_hat = {consts.mg_hat:.6f}  limit speed = {consts.q_hat:.6f}")

# %% [markdown]
# The admissibility gate rejects a gas with p'' = 0 and names the condition.

# %%
try:
    E.linear_eos(0.5, 1.0, 0.5)
except E.InadmissibleEOS as exc:
    print([c.reason for c in exc.report.failures()])

# %%
branch = E.SupersonicBranch(eos, consts, 0.6)
for t in (0.0, 0.2, 0.4, 0.6):
    s = branch.at(t)
    print(f"t={t:.1f}  q={s.q:.5f}  rho={s.rho:.5f}  F={s.F:.5f}  K={s.K:.5f}")

# %% [markdown]
# ## The streamline arc
#
# On the arc the boundary values of W and Z are tied by (b - c) + 2 t d = 0,
# and they coincide at the sonic point.

# %%
ref = pl.setup(pl.parse_config(pl.REFERENCE_CONFIG))
x = np.linspace(ref.spec.x1, ref.spec.x3, 200)
b, c, d = B.bcd_hat(ref.spec, ref.branch, x)
print("identity residual:", np.max(np.abs((b - c) + 2 * ref.spec.t_of_x(x) * d)))
print("image of the arc: t0 = %.5f, psi0 = %.6f" % (ref.hb.t0, ref.hb.psi0))

# %%
t = np.linspace(0, ref.hb.t0, 6)
print(np.column_stack([t, ref.hb.psi_tilde(t)]))
