"""Identity memory bus and DMA allocator for emulated devices.

The bus owns a flat synthetic address space.  Regions allocated through
``EmuDmaAllocator`` are registered with their device address equal to
their host address (identity mapping), which makes every address the
driver computes directly checkable by the device models.

Any device access outside a registered region is recorded as a
violation instead of raising, so a test can run a whole scenario and
then assert the violation list is empty.
"""

import bisect
import logging

from ..errors import DmaAllocationError
from ..memory import DmaMemory, DmaAllocator

log = logging.getLogger(__name__)

_BASE_ADDRESS = 0x1_0000_0000
_GUARD_GAP = 4096


class MemoryBus:
    """Maps device addresses to host memory for emulated devices."""

    def __init__(self):
        self._bases: list[int] = []
        self._regions: list[DmaMemory] = []
        self._next = _BASE_ADDRESS
        self.violations: list[str] = []

    def register(self, region: DmaMemory):
        i = bisect.bisect(self._bases, region.device_base)
        self._bases.insert(i, region.device_base)
        self._regions.insert(i, region)

    def reserve(self, size: int) -> int:
        """Hand out the next free device-address range (4096-aligned)."""
        base = self._next
        self._next += (size + 4095) // 4096 * 4096 + _GUARD_GAP
        return base

    def resolve(self, addr: int, length: int, who: str):
        """Find the region covering ``[addr, addr+length)`` or record a violation."""
        i = bisect.bisect(self._bases, addr) - 1
        if i >= 0:
            region = self._regions[i]
            offset = addr - region.device_base
            if offset + length <= region.length:
                return region, offset
        self.violations.append(
            f"{who}: DMA access 0x{addr:x}+{length} outside registered regions"
        )
        return None

    def read(self, addr: int, length: int, who: str) -> bytes | None:
        loc = self.resolve(addr, length, who)
        if loc is None:
            return None
        region, offset = loc
        return bytes(region.buffer[offset:offset + length])

    def write(self, addr: int, data, who: str) -> bool:
        loc = self.resolve(addr, len(data), who)
        if loc is None:
            return False
        region, offset = loc
        region.buffer[offset:offset + len(data)] = data
        return True

    def view(self, addr: int, length: int, who: str):
        """Writable view of a registered range, or None (violation recorded)."""
        loc = self.resolve(addr, length, who)
        if loc is None:
            return None
        region, offset = loc
        return region.buffer[offset:offset + length]


class EmuDmaAllocator(DmaAllocator):
    """Identity-mapped allocator over a :class:`MemoryBus`.

    Host addresses are abstract tokens (host-side access goes through
    the region's buffer, never through the numeric address); device
    addresses equal them, so the whole space is trivially contiguous.
    """

    contiguity_unit = None

    def __init__(self, bus: MemoryBus):
        super().__init__()
        self.bus = bus

    def allocate_dma(self, size: int, require_contiguous: bool = True) -> DmaMemory:
        if size <= 0:
            raise DmaAllocationError("size must be positive")
        base = self.bus.reserve(size)
        region = DmaMemory(
            buffer=memoryview(bytearray(size)),
            host_base=base,
            device_base=base,
            length=size,
        )
        self.bus.register(region)
        self._regions.append(region)
        return region
