"""Pure-Python descriptor kernels.

These are the hot per-descriptor loops of the drivers: scanning status
flags, writing descriptor records, and maintaining virtqueue rings.
The compiled extension in ``_native.pyx`` implements the identical
interface; either backend may be active (see ``uddk._kernels``).

All descriptor fields are little-endian.  Layouts:

ixgbe receive descriptor, 16 bytes:
    read form   u64 buf_addr @0, u64 hdr_addr @8 (zero)
    writeback   u32 status   @8 (DD=bit0, EOP=bit1), u16 pkt_len @12

ixgbe transmit descriptor, 16 bytes:
    u64 buf_addr @0, u32 cmd_len @8 (length bits 0-15 plus command
    flags), u32 status @12 (DD=bit0)

virtqueue descriptor, 16 bytes:
    u64 addr @0, u32 len @8, u16 flags @12, u16 next @14
virtqueue available ring: u16 flags, u16 idx, u16 ring[size]
virtqueue used ring:      u16 flags, u16 idx, {u32 id, u32 len}[size]
"""

import struct

BACKEND = "pure"

RX_STATUS_DD = 1 << 0
RX_STATUS_EOP = 1 << 1
TX_STATUS_DD = 1 << 0

_u16 = struct.Struct("<H")
_u32 = struct.Struct("<I")
_rx_read = struct.Struct("<QQ")
_tx_desc = struct.Struct("<QII")
_vq_desc = struct.Struct("<QIHH")
_used_elem = struct.Struct("<II")


def ixgbe_rx_scan(ring, ring_size, rx_index, budget, lens_out):
    """Count ready descriptors starting at ``rx_index``.

    Fills ``lens_out[k]`` with the packet length of the k-th ready
    descriptor.  Returns ``(count, multi_segment)`` where the flag is
    True when a descriptor had DD set without EOP.
    """
    n = 0
    idx = rx_index
    while n < budget:
        base = idx * 16
        status = _u32.unpack_from(ring, base + 8)[0]
        if not status & RX_STATUS_DD:
            break
        if not status & RX_STATUS_EOP:
            return n, True
        lens_out[n] = _u16.unpack_from(ring, base + 12)[0]
        n += 1
        idx += 1
        if idx == ring_size:
            idx = 0
    return n, False


def ixgbe_rx_refill(ring, ring_size, start_index, addrs, count):
    """Write ``count`` read-form descriptors (clears the status dword)."""
    idx = start_index
    for k in range(count):
        _rx_read.pack_into(ring, idx * 16, addrs[k], 0)
        idx += 1
        if idx == ring_size:
            idx = 0


def ixgbe_tx_clean_count(ring, ring_size, clean_index, pending, block):
    """Number of transmit descriptors reclaimable in whole blocks.

    A block of ``block`` descriptors is reclaimable when its last
    descriptor has DD set (the device completes in order).
    """
    cleanable = 0
    idx = clean_index
    while pending - cleanable >= block:
        probe = (idx + block - 1) % ring_size
        status = _u32.unpack_from(ring, probe * 16 + 12)[0]
        if not status & TX_STATUS_DD:
            break
        cleanable += block
        idx = (idx + block) % ring_size
    return cleanable


def ixgbe_tx_fill(ring, ring_size, tx_index, addrs, sizes, count, cmd_flags):
    """Write ``count`` transmit descriptors starting at ``tx_index``."""
    idx = tx_index
    for k in range(count):
        _tx_desc.pack_into(ring, idx * 16, addrs[k], sizes[k] | cmd_flags, 0)
        idx += 1
        if idx == ring_size:
            idx = 0


def vq_used_idx(mem, used_off):
    """Free-running index of the used ring (device-written)."""
    return _u16.unpack_from(mem, used_off + 2)[0]


def vq_read_used(mem, used_off, qsize, last_used, budget, ids_out, lens_out):
    """Copy up to ``budget`` pending used-ring entries into the out arrays.

    ``last_used`` is the driver's free-running cursor.  Returns the
    number of entries read; the caller advances its cursor by that much.
    """
    avail = (_u16.unpack_from(mem, used_off + 2)[0] - last_used) & 0xFFFF
    n = min(budget, avail)
    for k in range(n):
        slot = (last_used + k) % qsize
        ids_out[k], lens_out[k] = _used_elem.unpack_from(mem, used_off + 4 + 8 * slot)
    return n


def vq_write_desc(mem, table_off, slot, addr, length, flags):
    """Fill one descriptor-table entry (``next`` is never used)."""
    _vq_desc.pack_into(mem, table_off + slot * 16, addr, length, flags, 0)


def vq_publish_avail(mem, avail_off, qsize, avail_idx, ids, count):
    """Append ``count`` descriptor indices to the available ring.

    Ring entries are written first, then the free-running index,
    matching the order the device expects.  Returns the new index.
    """
    for k in range(count):
        slot = (avail_idx + k) % qsize
        _u16.pack_into(mem, avail_off + 4 + 2 * slot, ids[k])
    new_idx = (avail_idx + count) & 0xFFFF
    _u16.pack_into(mem, avail_off + 2, new_idx)
    return new_idx
