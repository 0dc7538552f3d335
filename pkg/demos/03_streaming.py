"""Stream cases through the full solve cycle while the data drifts.

Two engines see the same drifted stream. Both retain every solved case.
One also refreshes its network every n_u retentions and re-hashes the
stored cases; the other keeps the network it started with. Under drift
the refreshed codes keep retrieval aligned with the new regime, so the
updating engine recovers while the frozen one stays wrong.
"""

from casehash import CbrEngine, HashIndex, Hyperparams, train, two_class_fixture

# Before the drift: blocks 0..4 vote for the label directly.
pre = two_class_fixture(n=600, n_noise=10, seed=5)
# After: block_rotation=1 shifts which block goes with which label, so a
# network trained on the old regime is systematically misled.
post = two_class_fixture(n=800, n_noise=10, seed=6, block_rotation=1,
                         id_start=10_000)

hyper = Hyperparams(k_w=16, k_v=16, r=16, l=2, hidden=32, n_u=50)
result = train(pre, hyper, epochs=10, seed=0)

engines = {}
for name, frozen in (("updating", False), ("frozen", True)):
    params = result.params.copy()
    index = HashIndex.build(pre, params)
    engines[name] = CbrEngine(index, params, top_n=10, no_update=frozen, seed=0)

window = 100
hits = {name: 0 for name in engines}
print(f"{'cases':>9}  {'updating':>8}  {'frozen':>6}")
for pos, case in enumerate(post, start=1):
    for name, engine in engines.items():
        record = engine.solve(case, true_label=case.label)
        hits[name] += bool(record.correct)
    if pos % window == 0:
        print(f"{pos - window:>4}-{pos:<4}  "
              f"{hits['updating'] / window:>8.2f}  "
              f"{hits['frozen'] / window:>6.2f}")
        hits = {name: 0 for name in engines}

upd = engines["updating"]
print(f"\nupdating engine: {upd.n_updates} model refreshes, "
      f"{len(upd.index)} cases now stored")
print(f"frozen engine:   {engines['frozen'].n_updates} refreshes, "
      f"{len(engines['frozen'].index)} cases stored")
