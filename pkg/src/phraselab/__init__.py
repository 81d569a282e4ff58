"""Desk-scale phrase-pair similarity laboratory.

Submodules: ``corpus`` (CSV loading and descriptive statistics),
``lexical`` (edit-distance baseline), ``text`` (tokenizer and
vocabulary), ``attention`` (disentangled content/position attention),
``model`` (encoder and training loop), ``evaluation`` (Pearson,
stratified folds, cross-validation), ``cli`` (command-line front-end).
"""

__version__ = "0.1.0"
