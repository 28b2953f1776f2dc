"""Thin producer of the routing pipeline's logit JSONL contract.

Wraps a fine-tuned or toy classifier, runs batch inference over
EXIST/EDOS-format CSV/TSV data, and writes one record per row with the raw
pre-softmax logits. Also recomputes the pipeline's class-balanced losses in
torch to cross-check the two implementations against shared fixtures.
"""

__version__ = "0.1.0"
