"""DMA-capable memory, memory pools, and packet buffer lifecycle.

Every driver in this kit builds on the same three pieces:

* ``DmaMemory`` — a pinned, device-visible region with both a host view
  (a writable buffer) and a device address.
* an allocator (``HugepageAllocator`` for real hardware, the emulated
  bus allocator in :mod:`uddk.emu.bus` for tests) that hands out regions
  and translates host addresses to device addresses.
* ``Mempool`` — a fixed-size collection of fixed-size packet buffers
  with a LIFO free stack.

Buffer entry layout (one entry per packet buffer, ``entry_size`` bytes):

    [ 0: 8)   device address of the entry start (little-endian)
    [ 8:12)   pool index (little-endian)
    [12:54)   reserved headroom
    [54:64)   headroom tail, used by drivers that prepend a header
    [64: ..)  packet data

Packet data always begins exactly ``HEADROOM`` (64) bytes into the
entry so that metadata and headroom share one cache line.

Concurrency: a ``Mempool`` and its buffers are confined to a single
thread.  A quiescent pool (nothing in flight) may be handed to another
thread, but there is no internal locking.
"""

import ctypes
import logging
import mmap
import os
import struct

from .errors import (
    AddressTranslationError,
    BufferOwnershipError,
    ContiguityError,
    DmaAllocationError,
    MempoolError,
)

log = logging.getLogger(__name__)

PAGE_SIZE = mmap.PAGESIZE
HUGE_PAGE_SIZE = 2 * 1024 * 1024

#: bytes reserved in front of the packet data of every buffer
HEADROOM = 64

#: default size of one pool entry (metadata + headroom + data)
DEFAULT_ENTRY_SIZE = 2048

_PAGEMAP_ENTRY_BYTES = 8
_PAGEMAP_PFN_MASK = (1 << 55) - 1  # bits 0-54
_PAGEMAP_PRESENT = 1 << 63


def virt_to_phys(vaddr: int) -> int:
    """Translate a virtual address of this process to a physical one.

    Reads the per-process page map: one little-endian 64-bit entry per
    page at file offset ``(vaddr // PAGE_SIZE) * 8``, physical frame
    number in bits 0-54, present flag in bit 63.
    """
    offset = (vaddr // PAGE_SIZE) * _PAGEMAP_ENTRY_BYTES
    with open("/proc/self/pagemap", "rb") as f:
        f.seek(offset)
        data = f.read(_PAGEMAP_ENTRY_BYTES)
    if len(data) != _PAGEMAP_ENTRY_BYTES:
        raise AddressTranslationError(f"pagemap entry for 0x{vaddr:x} unreadable")
    entry = struct.unpack("<Q", data)[0]
    if not entry & _PAGEMAP_PRESENT:
        raise AddressTranslationError(f"page at 0x{vaddr:x} not present")
    pfn = entry & _PAGEMAP_PFN_MASK
    if pfn == 0:
        # the kernel hides frame numbers from unprivileged readers
        raise AddressTranslationError(
            "pagemap returned frame 0 (insufficient privileges?)"
        )
    return pfn * PAGE_SIZE + vaddr % PAGE_SIZE


class DmaMemory:
    """A pinned memory region visible to both the host and a device.

    ``buffer`` is the host-side view (writable, zero-initialized at
    allocation).  ``host_base`` and ``device_base`` are the numeric
    base addresses of the two views; offsets are preserved between
    them within one region.
    """

    __slots__ = ("buffer", "host_base", "device_base", "length", "_mm")

    def __init__(self, buffer, host_base: int, device_base: int, length: int, mm=None):
        self.buffer = buffer
        self.host_base = host_base
        self.device_base = device_base
        self.length = length
        self._mm = mm  # keeps a backing mmap object alive

    def __len__(self) -> int:
        return self.length

    def __repr__(self):
        return (
            f"DmaMemory(host=0x{self.host_base:x}, device=0x{self.device_base:x}, "
            f"length={self.length})"
        )


class DmaAllocator:
    """Base allocator: keeps a registry of regions for address translation."""

    #: physically contiguous allocation unit, or None when the whole
    #: address space is contiguous (emulated bus)
    contiguity_unit: int | None = None

    def __init__(self):
        self._regions: list[DmaMemory] = []

    def allocate_dma(self, size: int, require_contiguous: bool = True) -> DmaMemory:
        raise NotImplementedError

    def _find_region(self, host_addr: int) -> DmaMemory:
        for region in self._regions:
            if region.host_base <= host_addr < region.host_base + region.length:
                return region
        raise AddressTranslationError(
            f"host address 0x{host_addr:x} is not inside any DMA region"
        )

    def translate_address(self, host_addr: int) -> int:
        """Translate a host address inside an allocated region.

        Offsets are preserved: ``translate(a + k) == translate(a) + k``
        for addresses within one region (page-level remapping happens
        only on the hugepage backend, where it is still offset-exact
        within each page).
        """
        region = self._find_region(host_addr)
        return self._translate_in_region(region, host_addr)

    def _translate_in_region(self, region: DmaMemory, host_addr: int) -> int:
        return region.device_base + (host_addr - region.host_base)


class HugepageAllocator(DmaAllocator):
    """Allocates DMA memory from explicitly mounted huge pages.

    Files are created under the huge-page mount (environment variable
    ``UDDK_HUGE_DIR``, default ``/mnt/huge``), sized up to a multiple of
    the 2 MiB huge page, mapped shared, and locked in memory.  Explicit
    huge pages are never migrated, so their physical addresses are
    stable, and each page is physically contiguous.

    A contiguous request larger than one huge page cannot be satisfied
    (pages are not guaranteed adjacent) and raises ``ContiguityError``.
    """

    contiguity_unit = HUGE_PAGE_SIZE

    def __init__(self, huge_dir: str | None = None):
        super().__init__()
        self.huge_dir = huge_dir or os.environ.get("UDDK_HUGE_DIR", "/mnt/huge")
        self._seq = 0

    def allocate_dma(self, size: int, require_contiguous: bool = True) -> DmaMemory:
        if size <= 0:
            raise ValueError("size must be positive")
        if require_contiguous and size > HUGE_PAGE_SIZE:
            raise ContiguityError(
                f"{size} bytes requested contiguous, largest unit is "
                f"{HUGE_PAGE_SIZE} (one huge page)"
            )
        backing = (size + HUGE_PAGE_SIZE - 1) // HUGE_PAGE_SIZE * HUGE_PAGE_SIZE
        path = os.path.join(
            self.huge_dir, f"uddk-{os.getpid()}-{self._seq}"
        )
        self._seq += 1
        try:
            fd = os.open(path, os.O_CREAT | os.O_RDWR, 0o600)
        except OSError as e:
            raise DmaAllocationError(
                f"cannot create huge page file in {self.huge_dir}: {e}"
            ) from e
        try:
            os.ftruncate(fd, backing)
            mm = mmap.mmap(fd, backing, mmap.MAP_SHARED)
        except OSError as e:
            raise DmaAllocationError(f"huge page mapping failed: {e}") from e
        finally:
            os.close(fd)
            # mapping keeps the pages; the name is not needed anymore
            try:
                os.unlink(path)
            except OSError:
                pass
        host_base = ctypes.addressof(ctypes.c_char.from_buffer(mm))
        if _mlock(host_base, backing) != 0:
            mm.close()
            raise DmaAllocationError("mlock failed (RLIMIT_MEMLOCK?)")
        region = DmaMemory(
            buffer=memoryview(mm)[:size],
            host_base=host_base,
            device_base=0,
            length=size,
            mm=mm,
        )
        region.device_base = virt_to_phys(host_base)
        self._regions.append(region)
        log.debug("allocated %d bytes of DMA memory at %r", size, region)
        return region

    def _translate_in_region(self, region: DmaMemory, host_addr: int) -> int:
        # regions can span several huge pages that are not physically
        # adjacent; resolve through the page map per page
        return virt_to_phys(host_addr)


_libc = None


def _mlock(addr: int, length: int) -> int:
    global _libc
    if _libc is None:
        _libc = ctypes.CDLL(None, use_errno=True)
    return _libc.mlock(ctypes.c_void_p(addr), ctypes.c_size_t(length))


class PacketBuffer:
    """One fixed-size DMA-able packet buffer owned by a mempool.

    ``data`` is the writable payload view (``entry_size - HEADROOM``
    bytes); ``size`` is the used payload length.  ``head`` covers the
    64 metadata/headroom bytes in front of the data; drivers that
    prepend a header place it at the tail of this view.
    """

    __slots__ = (
        "pool",
        "pool_index",
        "buf_device_addr",
        "data_device_addr",
        "size",
        "data",
        "head",
    )

    def __init__(self, pool, pool_index, buf_device_addr, head, data):
        self.pool = pool
        self.pool_index = pool_index
        self.buf_device_addr = buf_device_addr
        self.data_device_addr = buf_device_addr + HEADROOM
        self.size = 0
        self.head = head
        self.data = data

    def free(self):
        """Return this buffer to its owning pool."""
        self.pool.buf_free(self)

    def __repr__(self):
        return (
            f"PacketBuffer(pool_index={self.pool_index}, size={self.size}, "
            f"device=0x{self.buf_device_addr:x})"
        )


class Mempool:
    """Fixed-size collection of fixed-size packet buffers.

    Buffers are recycled through a LIFO stack of free indices, so the
    most recently freed (cache-warm) buffer is reused first.  Double
    frees are detected and raise ``BufferOwnershipError``.

    The backing DMA memory is allocated without a whole-pool contiguity
    requirement; each entry is device-contiguous because ``entry_size``
    divides the allocation unit.
    """

    def __init__(self, allocator: DmaAllocator, capacity: int,
                 entry_size: int = DEFAULT_ENTRY_SIZE):
        if capacity <= 0:
            raise MempoolError("capacity must be positive")
        if entry_size < 128:
            raise MempoolError("entry_size must be at least 128 bytes")
        unit = allocator.contiguity_unit
        if unit is not None and unit % entry_size:
            # an entry must never straddle a contiguity boundary, or its
            # tail would land on an unrelated physical page
            raise MempoolError(
                f"entry_size {entry_size} must divide the allocator's "
                f"contiguous unit ({unit})"
            )
        self.allocator = allocator
        self.capacity = capacity
        self.entry_size = entry_size
        self.mem = allocator.allocate_dma(capacity * entry_size,
                                          require_contiguous=False)
        mem_view = self.mem.buffer
        self.buffers: list[PacketBuffer] = []
        for i in range(capacity):
            base = i * entry_size
            dev_addr = allocator.translate_address(self.mem.host_base + base)
            struct.pack_into("<QI", mem_view, base, dev_addr, i)
            self.buffers.append(
                PacketBuffer(
                    pool=self,
                    pool_index=i,
                    buf_device_addr=dev_addr,
                    head=mem_view[base:base + HEADROOM],
                    data=mem_view[base + HEADROOM:base + entry_size],
                )
            )
        # LIFO free stack; index order chosen so buffer 0 is handed out first
        self.free_stack: list[int] = list(range(capacity - 1, -1, -1))
        self._is_free = bytearray(b"\x01" * capacity)

    @property
    def free_count(self) -> int:
        return len(self.free_stack)

    @property
    def max_frame_size(self) -> int:
        return self.entry_size - HEADROOM

    def buf_alloc(self) -> PacketBuffer | None:
        """Take one buffer, or None when the pool is exhausted."""
        if not self.free_stack:
            return None
        idx = self.free_stack.pop()
        self._is_free[idx] = 0
        buf = self.buffers[idx]
        buf.size = self.entry_size - HEADROOM
        return buf

    def buf_alloc_batch(self, n: int) -> list[PacketBuffer]:
        """Take up to ``n`` buffers; a short list signals exhaustion."""
        take = min(n, len(self.free_stack))
        out = []
        pop = self.free_stack.pop
        is_free = self._is_free
        buffers = self.buffers
        size = self.entry_size - HEADROOM
        for _ in range(take):
            idx = pop()
            is_free[idx] = 0
            buf = buffers[idx]
            buf.size = size
            out.append(buf)
        return out

    def buf_free(self, buf: PacketBuffer):
        """Return a buffer to this pool's free stack."""
        if buf.pool is not self:
            raise BufferOwnershipError(
                f"buffer belongs to a different pool: {buf!r}"
            )
        idx = buf.pool_index
        if self._is_free[idx]:
            raise BufferOwnershipError(f"double free of {buf!r}")
        self._is_free[idx] = 1
        self.free_stack.append(idx)
