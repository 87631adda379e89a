"""Adversarial reprogramming of a frozen spoken-command classifier.

Submodules:

* ``tensor``: a small reverse-mode autodiff engine on numpy arrays.
* ``dsp``: WAV I/O, log-mel features built from graph ops, SpecAugment.
* ``model``: conv + BiGRU + attention acoustic model and checkpoints.
* ``reprogram``: the trainable input perturbation.
* ``mapping``: many-to-one source-to-target label mappings.
* ``training``: regimes, Adam loop, and the multi-run protocol.
* ``data``: dataset scanning, low-resource limits, synthetic commands.
* ``cli``: the ``arscr`` command.
"""

__version__ = "0.1.0"
