"""Register map and descriptor constants for 82599-family devices.

One generated-style table shared by the driver and the emulated device
model; it covers exactly the subset of the device that this driver
touches.  Per-queue registers are functions of the queue index (stride
0x40, valid for the first 64 queues).
"""

BAR0_LENGTH = 512 * 1024

# general control
CTRL = 0x00000
CTRL_LNK_RST = 1 << 3
CTRL_RST = 1 << 26
CTRL_RST_MASK = CTRL_LNK_RST | CTRL_RST

EIMC = 0x00888
IRQ_CLEAR_MASK = 0x7FFFFFFF

EEC = 0x10010
EEC_ARD = 1 << 9  # EEPROM/Flash auto-read done

RDRXCTL = 0x02F00
RDRXCTL_DMAIDONE = 1 << 3
RDRXCTL_CRCSTRIP = 1 << 1

# link
AUTOC = 0x042A0
AUTOC_LMS_MASK = 0x7 << 13
AUTOC_LMS_10G_SERIAL = 0x3 << 13
AUTOC_AN_RESTART = 1 << 12

LINKS = 0x042A4
LINKS_UP = 1 << 30
LINKS_SPEED_MASK = 0x3 << 28
LINKS_SPEED_10G = 0x3 << 28

# filtering
FCTRL = 0x05080
FCTRL_MPE = 1 << 8  # multicast promiscuous
FCTRL_UPE = 1 << 9  # unicast promiscuous
FCTRL_BAM = 1 << 10  # accept broadcast

HLREG0 = 0x04240
HLREG0_TXCRCEN = 1 << 0
HLREG0_RXCRCSTRP = 1 << 1
HLREG0_TXPADEN = 1 << 10

RXCTRL = 0x03000
RXCTRL_RXEN = 1 << 0

DMATXCTL = 0x04A80
DMATXCTL_TE = 1 << 0


# receive queue registers
def RDBAL(q: int) -> int:
    return 0x01000 + 0x40 * q


def RDBAH(q: int) -> int:
    return 0x01004 + 0x40 * q


def RDLEN(q: int) -> int:
    return 0x01008 + 0x40 * q


def RDH(q: int) -> int:
    return 0x01010 + 0x40 * q


def SRRCTL(q: int) -> int:
    return 0x01014 + 0x40 * q


def RDT(q: int) -> int:
    return 0x01018 + 0x40 * q


def RXDCTL(q: int) -> int:
    return 0x01028 + 0x40 * q


SRRCTL_BSIZEPKT_MASK = 0x1F  # buffer size in 1 KiB units
SRRCTL_DESCTYPE_MASK = 0x7 << 25
SRRCTL_DESCTYPE_ADV_ONEBUF = 0x1 << 25
SRRCTL_DROP_EN = 1 << 28

RXDCTL_ENABLE = 1 << 25


# transmit queue registers
def TDBAL(q: int) -> int:
    return 0x06000 + 0x40 * q


def TDBAH(q: int) -> int:
    return 0x06004 + 0x40 * q


def TDLEN(q: int) -> int:
    return 0x06008 + 0x40 * q


def TDH(q: int) -> int:
    return 0x06010 + 0x40 * q


def TDT(q: int) -> int:
    return 0x06018 + 0x40 * q


def TXDCTL(q: int) -> int:
    return 0x06028 + 0x40 * q


TXDCTL_ENABLE = 1 << 25

# statistics (clear-on-read)
GPRC = 0x04074  # good packets received
GPTC = 0x04080  # good packets transmitted
GORCL = 0x04088  # good octets received, low  (read before GORCH)
GORCH = 0x0408C  # good octets received, high
GOTCL = 0x04090  # good octets transmitted, low (read before GOTCH)
GOTCH = 0x04094  # good octets transmitted, high

# descriptors (16 bytes each, little-endian)
DESC_LEN = 16

RXD_STAT_DD = 1 << 0
RXD_STAT_EOP = 1 << 1

TXD_CMD_EOP = 1 << 24
TXD_CMD_IFCS = 1 << 25  # insert CRC
TXD_CMD_RS = 1 << 27  # report status
TXD_CMD_DEXT = 1 << 29
TXD_STAT_DD = 1 << 0

MAX_QUEUES = 64
MIN_RING_SIZE = 64
MAX_RING_SIZE = 4096

# PCI identity used by the emulated device
PCI_VENDOR_ID = 0x8086
PCI_DEVICE_ID = 0x10FB  # 82599ES

#: device ids the framework dispatches to this driver
DEVICE_IDS = frozenset({0x10FB, 0x10FC, 0x1528, 0x1563})
