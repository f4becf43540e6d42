"""Backend-neutral device register access and PCI housekeeping.

Two kinds of register spaces exist:

* ``RegisterSpace`` — MMIO-style, strictly 32-bit wide and 4-byte
  aligned accesses.  Exact access width matters on real devices;
  splitting a 32-bit register into two 16-bit reads does not work, so
  the API offers nothing narrower.
* ``PortSpace`` — IO-port-style, 8/16/32-bit naturally aligned
  accesses, used by the legacy VirtIO transport.

The host backend maps ``/sys/bus/pci/devices/<addr>/resource0`` for
MMIO and uses plain read/write calls on ``resource<N>`` files for port
BARs (the kernel translates those into port instructions; easier than
raw IN/OUT at the cost of a syscall).  Emulated devices provide their
own subclasses and are addressed by the scheme ``emu:<name>``.

A space is confined to the thread owning its device; accessors are not
internally synchronized.
"""

import ctypes
import logging
import mmap
import os
import re
import struct
import time

from .errors import (
    BarAccessError,
    DeviceNotFoundError,
    RegisterAccessError,
    RegisterWaitTimeout,
)

log = logging.getLogger(__name__)

EMU_SCHEME = "emu:"

_PCI_ADDR_RE = re.compile(
    r"^([0-9a-fA-F]{4}):([0-9a-fA-F]{2}):([0-9a-fA-F]{2})\.([0-9a-fA-F])$"
)

#: bus-master bit in the 16-bit PCI command register
PCI_COMMAND_OFFSET = 4
PCI_COMMAND_BUS_MASTER = 1 << 2


def is_emu_address(addr: str) -> bool:
    return addr.startswith(EMU_SCHEME)


def parse_pci_address(addr: str) -> str:
    """Validate and normalize a PCI address of the form DDDD:BB:DD.F."""
    m = _PCI_ADDR_RE.match(addr)
    if not m:
        raise ValueError(
            f"invalid PCI address {addr!r}, expected 'DDDD:BB:DD.F' "
            f"(e.g. 0000:03:00.0)"
        )
    return addr.lower()


def _device_path(addr: str) -> str:
    return f"/sys/bus/pci/devices/{parse_pci_address(addr)}"


class RegisterSpace:
    """32-bit register space.  Subclasses implement ``_read32``/``_write32``."""

    length = 0

    def _check32(self, offset: int):
        if offset % 4:
            raise RegisterAccessError(f"offset 0x{offset:x} not 4-byte aligned")
        if not 0 <= offset <= self.length - 4:
            raise RegisterAccessError(
                f"offset 0x{offset:x} outside register space of {self.length} bytes"
            )

    def read32(self, offset: int) -> int:
        self._check32(offset)
        return self._read32(offset)

    def write32(self, offset: int, value: int):
        self._check32(offset)
        self._write32(offset, value & 0xFFFFFFFF)

    def set_flags32(self, offset: int, mask: int):
        self.write32(offset, self.read32(offset) | mask)

    def clear_flags32(self, offset: int, mask: int):
        self.write32(offset, self.read32(offset) & ~mask)

    def wait_set32(self, offset: int, mask: int, timeout: float = 1.0):
        """Poll until all bits in ``mask`` are set, with bounded backoff."""
        if not mask:
            raise ValueError("mask must be non-zero")
        deadline = time.monotonic() + timeout
        delay = 0.0
        while True:
            if self.read32(offset) & mask == mask:
                return
            if time.monotonic() >= deadline:
                raise RegisterWaitTimeout(offset, mask, timeout)
            if delay:
                time.sleep(delay)
            delay = min(delay * 2 or 1e-6, 1e-3)

    def wait_clear32(self, offset: int, mask: int, timeout: float = 1.0):
        """Poll until all bits in ``mask`` are clear."""
        if not mask:
            raise ValueError("mask must be non-zero")
        deadline = time.monotonic() + timeout
        delay = 0.0
        while True:
            if self.read32(offset) & mask == 0:
                return
            if time.monotonic() >= deadline:
                raise RegisterWaitTimeout(offset, mask, timeout)
            if delay:
                time.sleep(delay)
            delay = min(delay * 2 or 1e-6, 1e-3)

    def _read32(self, offset: int) -> int:
        raise NotImplementedError

    def _write32(self, offset: int, value: int):
        raise NotImplementedError


class PortSpace:
    """8/16/32-bit IO-port-style space, naturally aligned accesses only."""

    length = 0

    def _check(self, offset: int, width: int):
        if offset % width:
            raise RegisterAccessError(
                f"offset 0x{offset:x} not aligned for {width * 8}-bit access"
            )
        if not 0 <= offset <= self.length - width:
            raise RegisterAccessError(
                f"offset 0x{offset:x} outside port space of {self.length} bytes"
            )

    def read8(self, offset: int) -> int:
        self._check(offset, 1)
        return self._read(offset, 1)

    def read16(self, offset: int) -> int:
        self._check(offset, 2)
        return self._read(offset, 2)

    def read32(self, offset: int) -> int:
        self._check(offset, 4)
        return self._read(offset, 4)

    def write8(self, offset: int, value: int):
        self._check(offset, 1)
        self._write(offset, 1, value & 0xFF)

    def write16(self, offset: int, value: int):
        self._check(offset, 2)
        self._write(offset, 2, value & 0xFFFF)

    def write32(self, offset: int, value: int):
        self._check(offset, 4)
        self._write(offset, 4, value & 0xFFFFFFFF)

    def _read(self, offset: int, width: int) -> int:
        raise NotImplementedError

    def _write(self, offset: int, width: int, value: int):
        raise NotImplementedError


class MmioRegisterSpace(RegisterSpace):
    """Host MMIO BAR mapped from the sysfs resource file."""

    def __init__(self, path: str):
        try:
            fd = os.open(path, os.O_RDWR)
        except FileNotFoundError as e:
            raise DeviceNotFoundError(f"no BAR resource at {path}") from e
        try:
            size = os.fstat(fd).st_size
            try:
                self._mm = mmap.mmap(fd, size, mmap.MAP_SHARED)
            except OSError as e:
                # IO-port BARs cannot be mapped
                raise BarAccessError(f"{path} is not memory-mappable: {e}") from e
        finally:
            os.close(fd)
        self.length = size

    def _read32(self, offset: int) -> int:
        return ctypes.c_uint32.from_buffer(self._mm, offset).value

    def _write32(self, offset: int, value: int):
        ctypes.c_uint32.from_buffer(self._mm, offset).value = value


class FilePortSpace(PortSpace):
    """Host IO-port BAR accessed through read/write calls on the resource file."""

    _fmt = {1: "<B", 2: "<H", 4: "<I"}

    def __init__(self, path: str):
        try:
            self._fd = os.open(path, os.O_RDWR)
        except FileNotFoundError as e:
            raise DeviceNotFoundError(f"no BAR resource at {path}") from e
        self.length = os.fstat(self._fd).st_size

    def _read(self, offset: int, width: int) -> int:
        data = os.pread(self._fd, width, offset)
        if len(data) != width:
            raise BarAccessError(f"short port read at 0x{offset:x}")
        return struct.unpack(self._fmt[width], data)[0]

    def _write(self, offset: int, width: int, value: int):
        os.pwrite(self._fd, struct.pack(self._fmt[width], value), offset)


class PciConfig:
    """16-bit accessors over a device's PCI configuration space."""

    def read16(self, offset: int) -> int:
        raise NotImplementedError

    def write16(self, offset: int, value: int):
        raise NotImplementedError

    def vendor_device(self) -> tuple[int, int]:
        return self.read16(0), self.read16(2)


class FilePciConfig(PciConfig):
    """Configuration space via the sysfs config file."""

    def __init__(self, addr: str):
        path = _device_path(addr) + "/config"
        try:
            self._fd = os.open(path, os.O_RDWR)
        except FileNotFoundError as e:
            raise DeviceNotFoundError(f"no PCI device at {addr}") from e

    def read16(self, offset: int) -> int:
        data = os.pread(self._fd, 2, offset)
        if len(data) != 2:
            raise BarAccessError(f"config space unreadable at 0x{offset:x}")
        return struct.unpack("<H", data)[0]

    def write16(self, offset: int, value: int):
        os.pwrite(self._fd, struct.pack("<H", value & 0xFFFF), offset)


def enable_dma(config: PciConfig):
    """Set the bus-master bit so the device may issue DMA."""
    command = config.read16(PCI_COMMAND_OFFSET)
    config.write16(PCI_COMMAND_OFFSET, command | PCI_COMMAND_BUS_MASTER)


def remove_kernel_driver(addr: str):
    """Unbind any kernel driver from the device; no-op when unbound or emulated."""
    if is_emu_address(addr):
        return
    path = _device_path(addr) + "/driver/unbind"
    if not os.path.exists(path):
        return
    with open(path, "w") as f:
        f.write(parse_pci_address(addr))
    log.info("unbound kernel driver from %s", addr)


def open_register_space(addr: str, bar: int = 0) -> RegisterSpace:
    """Open a device's MMIO BAR, dispatching on the address scheme."""
    if is_emu_address(addr):
        from .emu import registry

        return registry.ensure(addr).register_space()
    return MmioRegisterSpace(_device_path(addr) + f"/resource{bar}")


def open_port_space(addr: str, bar: int = 0) -> PortSpace:
    """Open a device's IO-port BAR, dispatching on the address scheme."""
    if is_emu_address(addr):
        from .emu import registry

        return registry.ensure(addr).port_space()
    return FilePortSpace(_device_path(addr) + f"/resource{bar}")


def open_pci_config(addr: str) -> PciConfig:
    if is_emu_address(addr):
        from .emu import registry

        return registry.ensure(addr).pci_config()
    return FilePciConfig(addr)
