"""Exception hierarchy shared by all uddk modules."""


class UddkError(Exception):
    """Base class for all driver-kit errors."""


class DmaAllocationError(UddkError):
    """DMA memory could not be allocated (resources, permissions)."""


class ContiguityError(DmaAllocationError):
    """Requested size exceeds the largest physically contiguous unit."""


class AddressTranslationError(UddkError):
    """Host address does not belong to any registered DMA region."""


class MempoolError(UddkError):
    """Invalid mempool operation."""


class BufferOwnershipError(MempoolError):
    """Buffer freed twice or freed to a pool that does not own it."""


class DeviceNotFoundError(UddkError):
    """No device at the given address."""


class BarAccessError(UddkError):
    """BAR resource exists but cannot be accessed the requested way."""


class RegisterAccessError(UddkError):
    """Out-of-range, misaligned, or wrongly sized register access."""


class RegisterWaitTimeout(UddkError):
    """A polled register bit did not become set within the timeout."""

    def __init__(self, offset: int, mask: int, timeout: float):
        super().__init__(
            f"register 0x{offset:05x} mask 0x{mask:08x} not set within {timeout:.3f}s"
        )
        self.offset = offset
        self.mask = mask


class InitError(UddkError):
    """Device initialization failed."""


class ProtocolError(UddkError):
    """Device violated (or driver cannot handle) the descriptor protocol."""


class CommandRejected(UddkError):
    """A control-queue command was rejected by the device."""
