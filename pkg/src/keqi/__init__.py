"""Knowledge-enhanced article quality identification at desk scale.

Modules: ``corpus`` (loading and entity annotation), ``entity_graph``
(co-occurrence graphs), ``embed_pretrain`` (weighted walks and skip-gram),
``nn_core`` (numerics), ``quality_model`` (text + graph classifier),
``label_pipeline`` (decision-tree labeler), ``train_eval`` (training and
metrics), ``synth`` (planted-signal corpus) and ``cli``.
"""

__version__ = "0.1.0"
