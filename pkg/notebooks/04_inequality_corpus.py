# %% [markdown]
# # Inequality corpora
#
# Random Gaussian-bump probes are pushed through the weighted Poincare and
# Nash checks.  The reports are deterministic for a fixed seed.

# %%
import json

from axiswirl import run_nash_corpus, run_poincare_corpus

poin = run_poincare_corpus(count=20, n=32)
print("poincare failures", len(poin.failures), "probes per p", poin.extra["p_counts"])
nash = run_nash_corpus(count=20, n=32)
print("nash failures", len(nash.failures), "jensen failures", nash.extra["jensen_failures"])

# %%
rep = json.loads(poin.to_json())
print({k: rep[k] for k in ("inequality", "corpus_seed", "probe_count", "max_ratio")})
print(poin.to_csv().splitlines()[:4])
