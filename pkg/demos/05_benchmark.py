"""Wall-clock retrieval: bucket probing versus a full linear scan.

Times both paths per query at two corpus sizes. The probe touches only
the cases whose codes sit within Hamming radius 2 of the query code; the
scan computes a distance to every stored case. Candidate counts track
bucket occupancy rather than corpus size, so the ratio should improve as
the corpus grows.
"""

from casehash import HashIndex, Hyperparams, bench, clustered_fixture, train

everything = clustered_fixture(n=50_050, n_classes=25, flip=0.08, seed=3)
queries = everything[50_000:]
result = train(everything[:2000], Hyperparams(r=24), epochs=10, seed=5)
print(f"dim {everything[0].features.dim}, {len(queries)} timed queries, "
      f"coder trained on the first 2000 cases")

print(f"\n{'corpus':>7}  {'buckets':>7}  {'candidates':>10}  "
      f"{'hashed':>9}  {'linear':>9}  {'ratio':>6}")
for size in (20_000, 50_000):
    index = HashIndex.build(everything[:size], result.params)
    res = bench(index, result.params, queries, top_n=10, max_radius=2)
    print(f"{size:>7}  {index.n_buckets:>7}  {res.mean_candidates:>10.0f}  "
          f"{res.hashed_mean_us:>7.0f}us  {res.linear_mean_us:>7.0f}us  "
          f"{res.ratio_mean:>6.3f}")
