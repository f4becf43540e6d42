# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled descriptor kernels.

Mirrors ``uddk._kernels.pure`` exactly; see that module for the
descriptor layouts.  Loads and stores are explicit little-endian byte
composition, so the code is correct on any host byte order.
"""

BACKEND = "compiled"

RX_STATUS_DD = 1 << 0
RX_STATUS_EOP = 1 << 1
TX_STATUS_DD = 1 << 0

ctypedef unsigned char u8
ctypedef unsigned short u16
ctypedef unsigned int u32
ctypedef unsigned long long u64


cdef inline u16 _ld16(const u8 *p) nogil:
    return p[0] | (<u16>p[1] << 8)


cdef inline u32 _ld32(const u8 *p) nogil:
    return p[0] | (<u32>p[1] << 8) | (<u32>p[2] << 16) | (<u32>p[3] << 24)


cdef inline void _st16(u8 *p, u16 v) nogil:
    p[0] = v & 0xFF
    p[1] = (v >> 8) & 0xFF


cdef inline void _st32(u8 *p, u32 v) nogil:
    p[0] = v & 0xFF
    p[1] = (v >> 8) & 0xFF
    p[2] = (v >> 16) & 0xFF
    p[3] = (v >> 24) & 0xFF


cdef inline void _st64(u8 *p, u64 v) nogil:
    _st32(p, <u32>(v & 0xFFFFFFFF))
    _st32(p + 4, <u32>(v >> 32))


def ixgbe_rx_scan(u8[::1] ring, int ring_size, int rx_index, int budget,
                  u32[::1] lens_out):
    cdef int n = 0
    cdef int idx = rx_index
    cdef u32 status
    cdef u8 *base
    while n < budget:
        base = &ring[idx * 16]
        status = _ld32(base + 8)
        if not status & 1:
            break
        if not status & 2:
            return n, True
        lens_out[n] = _ld16(base + 12)
        n += 1
        idx += 1
        if idx == ring_size:
            idx = 0
    return n, False


def ixgbe_rx_refill(u8[::1] ring, int ring_size, int start_index,
                    u64[::1] addrs, int count):
    cdef int k
    cdef int idx = start_index
    cdef u8 *base
    for k in range(count):
        base = &ring[idx * 16]
        _st64(base, addrs[k])
        _st64(base + 8, 0)
        idx += 1
        if idx == ring_size:
            idx = 0


def ixgbe_tx_clean_count(u8[::1] ring, int ring_size, int clean_index,
                         int pending, int block):
    cdef int cleanable = 0
    cdef int idx = clean_index
    cdef int probe
    while pending - cleanable >= block:
        probe = (idx + block - 1) % ring_size
        if not _ld32(&ring[probe * 16 + 12]) & 1:
            break
        cleanable += block
        idx = (idx + block) % ring_size
    return cleanable


def ixgbe_tx_fill(u8[::1] ring, int ring_size, int tx_index,
                  u64[::1] addrs, u32[::1] sizes, int count, u32 cmd_flags):
    cdef int k
    cdef int idx = tx_index
    cdef u8 *base
    for k in range(count):
        base = &ring[idx * 16]
        _st64(base, addrs[k])
        _st32(base + 8, sizes[k] | cmd_flags)
        _st32(base + 12, 0)
        idx += 1
        if idx == ring_size:
            idx = 0


def vq_used_idx(u8[::1] mem, int used_off):
    return _ld16(&mem[used_off + 2])


def vq_read_used(u8[::1] mem, int used_off, int qsize, int last_used,
                 int budget, u32[::1] ids_out, u32[::1] lens_out):
    cdef int avail = (_ld16(&mem[used_off + 2]) - last_used) & 0xFFFF
    cdef int n = budget if budget < avail else avail
    cdef int k, slot
    cdef u8 *elem
    for k in range(n):
        slot = (last_used + k) % qsize
        elem = &mem[used_off + 4 + 8 * slot]
        ids_out[k] = _ld32(elem)
        lens_out[k] = _ld32(elem + 4)
    return n


def vq_write_desc(u8[::1] mem, int table_off, int slot, u64 addr,
                  u32 length, u16 flags):
    cdef u8 *base = &mem[table_off + slot * 16]
    _st64(base, addr)
    _st32(base + 8, length)
    _st16(base + 12, flags)
    _st16(base + 14, 0)


def vq_publish_avail(u8[::1] mem, int avail_off, int qsize, int avail_idx,
                     u16[::1] ids, int count):
    cdef int k, slot
    for k in range(count):
        slot = (avail_idx + k) % qsize
        _st16(&mem[avail_off + 4 + 2 * slot], ids[k])
    cdef int new_idx = (avail_idx + count) & 0xFFFF
    _st16(&mem[avail_off + 2], <u16>new_idx)
    return new_idx
