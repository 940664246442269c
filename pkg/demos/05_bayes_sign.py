# %% [markdown]
# # Comparing two observed default rates
#
# With few obligors an observed rate is a noisy view of the true one. With
# uniform priors the posteriors are beta distributions, and the chance that
# one true rate exceeds the other has a closed form.

# %%
from sectorcorr import bayes_sign, bayes_sign_prob

# %%
print("no data at all      :", bayes_sign_prob(0, 0, 0, 0))
print("1 of 1 versus 0 of 1:", bayes_sign_prob(1, 1, 0, 1))

# %% [markdown]
# The same observed rate of 10% carries more weight with more obligors.

# %%
for n in (10, 100, 1000, 10000):
    print(f"{n // 10:>5}/{n:<6} vs 5%: sign {bayes_sign(n // 10, n, n // 20, n):+.6f}")

# %% [markdown]
# Replacing the hard sign in Kendall's tau with this soft version is one
# way to account for small cohorts. Here are the soft signs for a short
# series of yearly counts out of 40 obligors.

# %%
counts = [0, 2, 1, 5, 1]
for ds in counts:
    print(" ".join(f"{bayes_sign(dt, 40, ds, 40):+.2f}" for dt in counts))
