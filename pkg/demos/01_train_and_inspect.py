"""Train a coder on synthetic mixed-type data and look at the codes it learns.

Walks through the basic loop: make a dataset, fit the hashing network,
watch the objective fall, then hash a few cases and check the identity
that ties inner products of sign vectors to Hamming distances.

Run from the repo root after an editable install:

    python3 demos/01_train_and_inspect.py
"""

import tempfile

import numpy as np

from casehash import (
    Hyperparams,
    hamming_distance,
    hash_case,
    load_checkpoint,
    save_checkpoint,
    split,
    train,
    two_class_fixture,
)
from casehash.network import inner_product

# 1. A two-class dataset: one-hot groups whose block correlates with the
#    label, plus uniform noise columns the coder has to learn to ignore.
cases = two_class_fixture(n=600, n_noise=10, seed=7)
train_cases, test_cases = split(cases, 0.8, seed=0)
print(f"{len(train_cases)} training cases, dim {cases[0].features.dim}")

# 2. Fit. Small widths keep this near-instant; the defaults are larger.
hyper = Hyperparams(k_w=16, k_v=16, r=16, l=2, hidden=32)
result = train(train_cases, hyper, epochs=8, seed=0)
print("\nepoch  train objective   val objective")
for rec in result.history:
    print(f"{rec.epoch:>5}  {rec.objective:>15.4f}  {rec.val_objective:>13.4f}")

# 3. Hash a few held-out cases. Same-label cases should land close in
#    Hamming space, different-label cases far.
a, b = next((x, y) for x in test_cases for y in test_cases
            if x.id != y.id and x.label == y.label)
c = next(x for x in test_cases if x.label != a.label)
code_a, code_b, code_c = (hash_case(x, result.params) for x in (a, b, c))

print(f"\ncode({a.id}) = {format(code_a.words[0], f'0{hyper.r}b')}")
print(f"code({b.id}) = {format(code_b.words[0], f'0{hyper.r}b')}  (same label)")
print(f"code({c.id}) = {format(code_c.words[0], f'0{hyper.r}b')}  (other label)")
print(f"d_H(same)  = {hamming_distance(code_a, code_b)}")
print(f"d_H(other) = {hamming_distance(code_a, code_c)}")

# 4. The inner product of two sign vectors determines the distance exactly:
#    d_H = (r - <a, b>) / 2.
ip = inner_product(code_a, code_c)
assert hamming_distance(code_a, code_c) == (hyper.r - ip) // 2
print(f"identity check: (r - {ip}) / 2 = {(hyper.r - ip) // 2}")

# 5. Checkpoints round-trip bit for bit.
with tempfile.NamedTemporaryFile(suffix=".chn") as tmp:
    save_checkpoint(result.params, tmp.name)
    reloaded = load_checkpoint(tmp.name)
codes_match = all(hash_case(x, reloaded) == hash_case(x, result.params)
                  for x in test_cases)
print(f"\ncheckpoint round trip, codes identical: {codes_match}")
