"""
Affinity planes between two questions
=====================================

Encode a pair with the shared BiLSTM and look at the cosine affinity grid
the CNN reads. Late fusion adds a second plane computed from topic rows.
"""

import numpy as np

from tapa.checks import toy_config, toy_model
from tapa.corpus import QuestionPair, tokenize

np.set_printoptions(precision=2, suppress=True, linewidth=120)

pair = QuestionPair("demo", tokenize("Which is the best way to learn coding?"),
                    tokenize("How do you learn to program?"), 1)
print("q1:", pair.q1_tokens)
print("q2:", pair.q2_tokens)

for fusion in ("early", "late"):
    cfg = toy_config(fusion=fusion, contextual=False, max_len=12)
    model = toy_model(cfg, seed=0, pairs=[pair])
    stack = model.affinity_stack(model.batch([pair]))
    print("== %s fusion: %d channel(s), valid region %s ==" % (fusion, stack.num_channels,
                                                             stack.valid_region[0]))
    names = ["embedding", "topic"]
    for c in range(stack.num_channels):
        print("   %s affinity:" % names[c])
        print(stack.channels.data[0, c])
    print("   logits:", model.logits(model.batch([pair])).data)
