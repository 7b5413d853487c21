"""
Topic vectors from collapsed Gibbs sampling
===========================================

Plant five topics with disjoint vocabularies, fit LDA, and look at the
word-level and document-level topic vectors the encoder consumes.
"""

import numpy as np

from tapa.lda import fit_gibbs, fuse_topics, infer_doc, word_topics
from tapa.synthetic import matched_tv_distance, planted_corpus

np.set_printoptions(precision=3, suppress=True)

print("== 1. a planted corpus ==")
docs, phi, vocab = planted_corpus(num_topics=5, num_docs=500, doc_len=40, seed=1)
print("   %d documents, %d word types; first doc starts:" % (len(docs), len(vocab)), docs[0][:6])

print("== 2. fitting ==")
model = fit_gibbs(docs, num_topics=5, alpha_total=1.0, beta=0.01, iterations=200, seed=0)
tv, matches = matched_tv_distance(model.topic_word, model.vocab, phi, vocab)
print("   mean total-variation distance to the planted topics: %.4f" % tv)
print("   planted -> fitted topic:", dict(matches))

print("== 3. per-word and per-document vectors ==")
print("   t'(t2w0)    ", word_topics(model, "t2w0"))
print("   t'(unknown) ", word_topics(model, "never-seen"))
doc = ["t3w%d" % i for i in range(10)]
t_doc = infer_doc(model, doc)
print("   t_D(topic-3 words)", t_doc)

print("== 4. the word+doc setting ==")
fused = fuse_topics(word_topics(model, "t3w0"), t_doc, "word+doc")
print("   product:", fused, " sum = %.3f (left unnormalized)" % fused.sum())
