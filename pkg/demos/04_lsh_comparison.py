"""Learned codes against random hyperplanes at the same code length.

Random projection LSH preserves angles between raw feature vectors, which
is useless when the features that matter are buried in noise columns.
The trained network learns which positions and interactions predict the
label, so at equal bit budget its neighborhoods are label-pure where the
LSH ones are not. Both coders plug into the same index and evaluation.
"""

from casehash import (
    HashIndex,
    Hyperparams,
    LshPlanes,
    evaluate,
    split,
    train,
    two_class_fixture,
)

# 60 noise columns against 25 informative one-hot columns: hostile ground
# for anything that treats all dimensions equally.
cases = two_class_fixture(n=2400, n_noise=60, flip=0.05, seed=150)
train_cases, test_cases = split(cases, 5 / 6, seed=0)
dim = cases[0].features.dim
print(f"{len(train_cases)} train / {len(test_cases)} test, "
      f"dim {dim} (60 of them noise)")

hyper = Hyperparams(r=36)
rows = []

result = train(train_cases, hyper, epochs=10, seed=0)
index = HashIndex.build(train_cases, result.params)
rows.append(("learned", evaluate(index, result.params, test_cases, top_n=10)))

planes = LshPlanes.sample(hyper.r, dim, seed=0)
index = HashIndex.build(train_cases, planes)
rows.append(("lsh", evaluate(index, planes, test_cases, top_n=10)))

print(f"\n{'coder':>8}  {'accuracy':>8}  {'MAP@10':>7}  {'prec@10':>7}")
for name, rep in rows:
    print(f"{name:>8}  {rep.accuracy:>8.3f}  {rep.map_at_n:>7.3f}  "
          f"{rep.prec_at_n:>7.3f}")
