"""In-process model of an 82599-family NIC.

Implements the hardware side of the descriptor protocol: it consumes
transmit descriptors the driver queued, fills receive descriptors from
an injection queue, maintains head registers, applies the MAC filter,
and keeps clear-on-read statistics registers.

The model deliberately parses descriptors with its own ``struct`` code
rather than the driver's kernel routines — it is the oracle the driver
is tested against.

Device time is discrete: :meth:`EmuIxgbe.step` performs one bounded
round of work.  With ``auto_step`` enabled the device also steps right
after every driver register write, which keeps simple transmit-side
flows synchronous.  Everything the driver does is recorded: register
accesses in ``access_log``, protocol breaches in ``violations``,
writes to unmodeled registers in ``warnings``.

An EmuIxgbe is confined to the thread driving it.
"""

import logging
import struct
import zlib
from collections import deque

from ..errors import BarAccessError
from ..ixgbe import regs
from ..pci import PciConfig, RegisterSpace
from .bus import MemoryBus

log = logging.getLogger(__name__)

BROADCAST_MAC = b"\xff" * 6

_u32 = struct.Struct("<I")
_rx_read_desc = struct.Struct("<QQ")
_rx_wb_desc = struct.Struct("<IHH")  # status, pkt_len, pad (at descriptor offset 8)
_tx_desc = struct.Struct("<QII")


class EmuRegisterSpace(RegisterSpace):
    """Driver-facing accessor over an emulated BAR0."""

    def __init__(self, dev: "EmuIxgbe"):
        self._dev = dev
        self.length = regs.BAR0_LENGTH

    def _read32(self, offset):
        return self._dev.reg_read32(offset)

    def _write32(self, offset, value):
        self._dev.reg_write32(offset, value)


class EmuPciConfig(PciConfig):
    def __init__(self, dev: "EmuIxgbe"):
        self._dev = dev

    def read16(self, offset):
        return struct.unpack_from("<H", self._dev.config, offset)[0]

    def write16(self, offset, value):
        struct.pack_into("<H", self._dev.config, offset, value & 0xFFFF)


class _RxQueueState:
    __slots__ = ("owned", "awaiting_first_fill")

    def __init__(self):
        self.owned = 0
        self.awaiting_first_fill = True


class EmuIxgbe:
    """Emulated 82599-family device over a :class:`MemoryBus`."""

    STEP_BUDGET = 64

    def __init__(self, name: str, bus: MemoryBus, mac: bytes | None = None,
                 auto_step: bool = False, capture_limit: int = 1 << 16,
                 max_frame_len: int = 2048 - 64):
        self.name = name
        self.bus = bus
        self.mac = mac or b"\x02\x00" + struct.pack("<I", zlib.crc32(name.encode()))
        self.auto_step = auto_step
        self.max_frame_len = max_frame_len
        self.regs = bytearray(regs.BAR0_LENGTH)
        self.config = bytearray(64)
        struct.pack_into("<HH", self.config, 0, regs.PCI_VENDOR_ID,
                         regs.PCI_DEVICE_ID)
        self.access_log: list[tuple[str, int, int, int]] = []
        self.violations: list[str] = []
        self.warnings: list[str] = []
        self.rx_inject: deque[bytes] = deque()
        self.tx_capture: deque[bytes] = deque(maxlen=capture_limit)
        # ground truth, exact regardless of clear-on-read register state
        self.truth_rx_packets = 0
        self.truth_rx_bytes = 0
        self.truth_tx_packets = 0
        self.truth_tx_bytes = 0
        self.filtered = 0
        self._pending = {"rx_pkts": 0, "rx_bytes": 0, "tx_pkts": 0, "tx_bytes": 0}
        self._octet_latch = {"rx": 0, "tx": 0}
        self._rx_state = [_RxQueueState() for _ in range(regs.MAX_QUEUES)]
        self._enabled_rx: list[int] = []
        self._enabled_tx: list[int] = []
        self._sched_reads: dict[int, list[int]] = {}
        self._stall_tx = False
        self._in_step = False
        self._rx_rr = 0
        self.peer: EmuIxgbe | None = None
        self._known_offsets = self._build_known_offsets()

    # -- wiring to the framework ------------------------------------------

    def register_space(self) -> EmuRegisterSpace:
        return EmuRegisterSpace(self)

    def port_space(self):
        raise BarAccessError(f"emu:{self.name} has no IO-port BAR")

    def pci_config(self) -> EmuPciConfig:
        return EmuPciConfig(self)

    @property
    def dma_enabled(self) -> bool:
        return bool(struct.unpack_from("<H", self.config, 4)[0] & 0x4)

    # -- raw register storage ---------------------------------------------

    def _get32(self, offset: int) -> int:
        return _u32.unpack_from(self.regs, offset)[0]

    def _set32(self, offset: int, value: int):
        _u32.pack_into(self.regs, offset, value & 0xFFFFFFFF)

    def _build_known_offsets(self):
        known = {
            regs.CTRL, regs.EIMC, regs.EEC, regs.RDRXCTL, regs.AUTOC,
            regs.LINKS, regs.FCTRL, regs.HLREG0, regs.RXCTRL, regs.DMATXCTL,
            regs.GPRC, regs.GPTC, regs.GORCL, regs.GORCH, regs.GOTCL,
            regs.GOTCH,
        }
        self._rdt_to_queue = {}
        self._head_offsets = set()
        self._rxdctl_to_queue = {}
        self._txdctl_to_queue = {}
        for q in range(regs.MAX_QUEUES):
            known.update({
                regs.RDBAL(q), regs.RDBAH(q), regs.RDLEN(q), regs.SRRCTL(q),
                regs.RDT(q), regs.RXDCTL(q), regs.RDH(q),
                regs.TDBAL(q), regs.TDBAH(q), regs.TDLEN(q), regs.TDT(q),
                regs.TXDCTL(q), regs.TDH(q),
            })
            self._rdt_to_queue[regs.RDT(q)] = q
            self._head_offsets.add(regs.RDH(q))
            self._head_offsets.add(regs.TDH(q))
            self._rxdctl_to_queue[regs.RXDCTL(q)] = q
            self._txdctl_to_queue[regs.TXDCTL(q)] = q
        return known

    # -- driver-facing register interface ---------------------------------

    def reg_read32(self, offset: int) -> int:
        sched = self._sched_reads.get(offset)
        if sched is not None:
            sched[1] -= 1
            if sched[1] <= 0:
                self._set32(offset, self._get32(offset) | sched[0])
                del self._sched_reads[offset]
        value = self._read_stats_reg(offset)
        if value is None:
            value = self._get32(offset)
        self.access_log.append(("r", 32, offset, value))
        return value

    def reg_write32(self, offset: int, value: int):
        self.access_log.append(("w", 32, offset, value))
        if offset in self._head_offsets:
            self.violations.append(
                f"driver wrote head register 0x{offset:05x} (value 0x{value:x})"
            )
            return
        if offset == regs.CTRL and value & regs.CTRL_RST_MASK:
            self._device_reset()
        elif offset == regs.AUTOC:
            self._set32(offset, value)
            if value & regs.AUTOC_AN_RESTART:
                self._set32(regs.LINKS, regs.LINKS_UP | regs.LINKS_SPEED_10G)
        elif offset in self._rdt_to_queue:
            self._on_rdt_write(self._rdt_to_queue[offset], value)
        elif offset in self._rxdctl_to_queue:
            self._set32(offset, value)
            q = self._rxdctl_to_queue[offset]
            if value & regs.RXDCTL_ENABLE:
                st = self._rx_state[q]
                st.owned = 0
                st.awaiting_first_fill = True
                self._set32(regs.RDH(q), 0)
                if q not in self._enabled_rx:
                    self._enabled_rx.append(q)
            elif q in self._enabled_rx:
                self._enabled_rx.remove(q)
        elif offset in self._txdctl_to_queue:
            self._set32(offset, value)
            q = self._txdctl_to_queue[offset]
            if value & regs.TXDCTL_ENABLE:
                self._set32(regs.TDH(q), self._get32(regs.TDT(q)))
                if q not in self._enabled_tx:
                    self._enabled_tx.append(q)
            elif q in self._enabled_tx:
                self._enabled_tx.remove(q)
        else:
            if offset not in self._known_offsets:
                self.warnings.append(f"write to unmodeled register 0x{offset:05x}")
            self._set32(offset, value)
        if self.auto_step and not self._in_step:
            self.step()

    def _read_stats_reg(self, offset: int):
        p = self._pending
        if offset == regs.GPRC:
            v, p["rx_pkts"] = p["rx_pkts"], 0
            return v & 0xFFFFFFFF
        if offset == regs.GPTC:
            v, p["tx_pkts"] = p["tx_pkts"], 0
            return v & 0xFFFFFFFF
        if offset == regs.GORCL:
            v, p["rx_bytes"] = p["rx_bytes"], 0
            self._octet_latch["rx"] = v >> 32
            return v & 0xFFFFFFFF
        if offset == regs.GORCH:
            v, self._octet_latch["rx"] = self._octet_latch["rx"], 0
            return v
        if offset == regs.GOTCL:
            v, p["tx_bytes"] = p["tx_bytes"], 0
            self._octet_latch["tx"] = v >> 32
            return v & 0xFFFFFFFF
        if offset == regs.GOTCH:
            v, self._octet_latch["tx"] = self._octet_latch["tx"], 0
            return v
        return None

    def _device_reset(self):
        self.regs[:] = bytes(len(self.regs))
        # reset-time defaults: EEPROM auto-read and DMA init completed
        self._set32(regs.EEC, regs.EEC_ARD)
        self._set32(regs.RDRXCTL, regs.RDRXCTL_DMAIDONE)
        for st in self._rx_state:
            st.owned = 0
            st.awaiting_first_fill = True
        self._enabled_rx.clear()
        self._enabled_tx.clear()
        self._pending = {k: 0 for k in self._pending}
        self._octet_latch = {"rx": 0, "tx": 0}

    def _on_rdt_write(self, q: int, value: int):
        ring_size = self._get32(regs.RDLEN(q)) // regs.DESC_LEN
        if ring_size == 0:
            self.violations.append(f"RDT write on queue {q} before ring setup")
            return
        st = self._rx_state[q]
        old = self._get32(regs.RDT(q))
        self._set32(regs.RDT(q), value)
        if st.awaiting_first_fill:
            # the ring starts empty at head 0; the first tail write hands
            # descriptors [0, value] to the device
            st.owned = value + 1
            st.awaiting_first_fill = False
        else:
            st.owned += (value - old) % ring_size
        if st.owned > ring_size:
            self.violations.append(
                f"rx queue {q} tail overflow: {st.owned} > ring size {ring_size}"
            )
            st.owned = ring_size

    # -- test hooks --------------------------------------------------------

    def schedule_set_after_reads(self, offset: int, mask: int, reads: int):
        """Make ``mask`` appear at ``offset`` after ``reads`` driver reads."""
        self._sched_reads[offset] = [mask, reads]

    def stall_tx(self, on: bool = True):
        """Stop processing transmit descriptors (ring fills up)."""
        self._stall_tx = on

    # -- frame injection / capture -----------------------------------------

    def inject_rx(self, frame: bytes):
        """Queue a frame for delivery into the device's receive path."""
        if not 1 <= len(frame) <= self.max_frame_len:
            raise ValueError(f"frame length {len(frame)} out of range")
        self.rx_inject.append(bytes(frame))

    def drain_tx(self) -> list[bytes]:
        """Return and clear captured frames in transmission order."""
        out = list(self.tx_capture)
        self.tx_capture.clear()
        return out

    def _accepts(self, frame: bytes) -> bool:
        fctrl = self._get32(regs.FCTRL)
        if fctrl & (regs.FCTRL_UPE | regs.FCTRL_MPE):
            return True
        dst = frame[:6]
        if dst == self.mac:
            return True
        return dst == BROADCAST_MAC and bool(fctrl & regs.FCTRL_BAM)

    # -- device work --------------------------------------------------------

    def step(self, budget: int = STEP_BUDGET) -> int:
        """One bounded round of device work; returns units of work done."""
        if self._in_step:
            return 0
        self._in_step = True
        try:
            work = 0
            if not self._stall_tx:
                work += self._step_tx(budget)
            work += self._step_rx(budget)
            if self.peer is not None and self.tx_capture:
                self.peer.rx_inject.extend(self.tx_capture)
                self.tx_capture.clear()
        finally:
            self._in_step = False
        return work

    def _step_tx(self, budget: int) -> int:
        work = 0
        for q in self._enabled_tx:
            ring_size = self._get32(regs.TDLEN(q)) // regs.DESC_LEN
            if ring_size == 0:
                continue
            base = self._get32(regs.TDBAL(q)) | (self._get32(regs.TDBAH(q)) << 32)
            tdh = self._get32(regs.TDH(q))
            tdt = self._get32(regs.TDT(q))
            while tdh != tdt and work < budget:
                if not self.dma_enabled:
                    self.violations.append(
                        f"tx descriptor fetch on queue {q} with bus mastering disabled"
                    )
                    break
                view = self.bus.view(base + tdh * regs.DESC_LEN, regs.DESC_LEN,
                                     f"emu:{self.name}")
                if view is None:
                    break
                addr, cmd_len, status = _tx_desc.unpack_from(view, 0)
                length = cmd_len & 0xFFFF
                data = self.bus.read(addr, length, f"emu:{self.name}")
                if data is not None:
                    self.tx_capture.append(data)
                    self.truth_tx_packets += 1
                    self.truth_tx_bytes += length
                    self._pending["tx_pkts"] += 1
                    self._pending["tx_bytes"] += length
                # completion mark, even when RS is absent (driver always sets it)
                _u32.pack_into(view, 12, status | regs.TXD_STAT_DD)
                tdh = (tdh + 1) % ring_size
                work += 1
            self._set32(regs.TDH(q), tdh)
        return work

    def _step_rx(self, budget: int) -> int:
        work = 0
        queues = self._enabled_rx
        if not queues:
            return 0
        while self.rx_inject and work < budget:
            frame = self.rx_inject[0]
            if not self._accepts(frame):
                self.rx_inject.popleft()
                self.filtered += 1
                work += 1
                continue
            q = self._pick_rx_queue(queues)
            if q is None:
                break  # every ring is full; leave frames queued
            if not self.dma_enabled:
                self.violations.append(
                    f"rx descriptor write on queue {q} with bus mastering disabled"
                )
                break
            st = self._rx_state[q]
            ring_size = self._get32(regs.RDLEN(q)) // regs.DESC_LEN
            base = self._get32(regs.RDBAL(q)) | (self._get32(regs.RDBAH(q)) << 32)
            rdh = self._get32(regs.RDH(q))
            view = self.bus.view(base + rdh * regs.DESC_LEN, regs.DESC_LEN,
                                 f"emu:{self.name}")
            if view is None:
                break
            buf_addr, _hdr = _rx_read_desc.unpack_from(view, 0)
            self.rx_inject.popleft()
            if self.bus.write(buf_addr, frame, f"emu:{self.name}"):
                _rx_wb_desc.pack_into(view, 8,
                                      regs.RXD_STAT_DD | regs.RXD_STAT_EOP,
                                      len(frame), 0)
                self.truth_rx_packets += 1
                self.truth_rx_bytes += len(frame)
                self._pending["rx_pkts"] += 1
                self._pending["rx_bytes"] += len(frame)
                self._set32(regs.RDH(q), (rdh + 1) % ring_size)
                st.owned -= 1
            work += 1
        return work

    def _pick_rx_queue(self, queues: list[int]):
        # incoming traffic is spread round-robin over the enabled queues
        for i in range(len(queues)):
            q = queues[(self._rx_rr + i) % len(queues)]
            if self._rx_state[q].owned > 0:
                self._rx_rr = (self._rx_rr + i + 1) % len(queues)
                return q
        return None
