"""Salient object detection from foundation-model pseudo-labels.

Subpackages: ``core`` (records and mask I/O), ``phrasekit`` (phrase labels),
``labelgen`` (text -> box -> mask labelling), ``datasetkit`` (manifests and
category statistics), ``dedecoder`` (the network), ``losskit`` (losses and
supervision targets), ``evalkit`` (metrics) and ``harness`` (training,
reports, ablations).
"""
__version__ = "0.1.0"
