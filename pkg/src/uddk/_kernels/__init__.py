"""Descriptor kernel selection.

The drivers route their per-descriptor inner loops through this module.
At import time the compiled extension is preferred; the pure-Python
implementation is the fallback.  Set ``UDDK_KERNELS=pure`` (or
``compiled``) to force a backend; ``compiled`` raises if the extension
is not built.

The emulated devices in :mod:`uddk.emu` intentionally do NOT use these
kernels — they parse descriptors independently so that driver and
device-model cannot share a bug.
"""

import importlib
import logging
import os

log = logging.getLogger(__name__)

_choice = os.environ.get("UDDK_KERNELS", "auto")

if _choice == "pure":
    from . import pure as active
elif _choice == "compiled":
    active = importlib.import_module("uddk._kernels._native")
else:
    try:
        active = importlib.import_module("uddk._kernels._native")
    except ImportError:
        from . import pure as active

        log.debug("compiled kernels unavailable, using pure-Python fallback")

BACKEND = active.BACKEND

RX_STATUS_DD = active.RX_STATUS_DD
RX_STATUS_EOP = active.RX_STATUS_EOP
TX_STATUS_DD = active.TX_STATUS_DD

ixgbe_rx_scan = active.ixgbe_rx_scan
ixgbe_rx_refill = active.ixgbe_rx_refill
ixgbe_tx_clean_count = active.ixgbe_tx_clean_count
ixgbe_tx_fill = active.ixgbe_tx_fill
vq_used_idx = active.vq_used_idx
vq_read_used = active.vq_read_used
vq_write_desc = active.vq_write_desc
vq_publish_avail = active.vq_publish_avail


def get_backend(name: str | None = None):
    """Return a kernels module by name ('pure', 'compiled', or None=active)."""
    if name is None or name == BACKEND:
        return active
    if name == "pure":
        from . import pure

        return pure
    if name == "compiled":
        return importlib.import_module("uddk._kernels._native")
    raise ValueError(f"unknown kernel backend {name!r}")
