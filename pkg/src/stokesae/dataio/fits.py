"""Minimal FITS primary-HDU reader and writer.

Only what single-slit spectro-polarimeter scans need: 2880-byte blocks of
80-character header cards followed by one big-endian data array. No
extensions, tables or compression.
"""
from dataclasses import dataclass, field

import numpy as np

BLOCK = 2880
CARD = 80

BITPIX_DTYPES = {8: ">u1", 16: ">i2", 32: ">i4", -32: ">f4", -64: ">f8"}
_RESERVED = {"SIMPLE", "BITPIX", "NAXIS", "EXTEND", "BSCALE", "BZERO", "END"}


class FitsError(ValueError):
    """Malformed FITS content; ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.offset = offset


class UnsupportedFitsError(FitsError):
    pass


@dataclass
class FitsHDU:
    """A parsed primary HDU.

    ``raw`` is the stored array, ``data`` the physical values
    (``BZERO + BSCALE * raw``; identical to ``raw`` when neither card is set).
    Both are in header-declared axis order, i.e. numpy shape
    ``(NAXISn, ..., NAXIS1)``.
    """

    header: dict
    raw: np.ndarray
    bitpix: int
    bscale: float = 1.0
    bzero: float = 0.0
    cards: list = field(default_factory=list)

    @property
    def data(self):
        if self.bscale == 1.0 and self.bzero == 0.0:
            return self.raw
        return self.bzero + self.bscale * self.raw.astype(np.float64)


def _parse_value(text, offset):
    text = text.strip()
    if text.startswith("'"):
        out = []
        i = 1
        while i < len(text):
            ch = text[i]
            if ch == "'":
                if i + 1 < len(text) and text[i + 1] == "'":
                    out.append("'")
                    i += 2
                    continue
                return "".join(out).rstrip()
            out.append(ch)
            i += 1
        raise FitsError("unterminated string value", offset)
    value = text.split("/", 1)[0].strip()
    if value == "T":
        return True
    if value == "F":
        return False
    if value == "":
        return None
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value.replace("D", "E").replace("d", "e"))
    except ValueError:
        raise FitsError(f"cannot parse header value {value!r}", offset) from None


def parse_header(data):
    """Return ``(header, cards, data_offset)``."""
    header = {}
    cards = []
    pos = 0
    while True:
        if pos + CARD > len(data):
            raise FitsError("header ended without an END card", pos)
        card = data[pos:pos + CARD].decode("ascii", errors="replace")
        key = card[:8].strip()
        if key == "END":
            pos += CARD
            break
        if card[8:10] == "= " and key:
            value = _parse_value(card[10:], pos)
            header[key] = value
            cards.append((key, value))
        elif key:
            cards.append((key, card[8:].rstrip()))
        pos += CARD
    data_offset = -(-pos // BLOCK) * BLOCK
    return header, cards, data_offset


def parse_fits(data):
    """Parse the primary HDU of a FITS file given as bytes."""
    data = bytes(data)
    if len(data) < BLOCK:
        raise FitsError(f"file shorter than one {BLOCK}-byte block", len(data))
    header, cards, offset = parse_header(data)
    first = data[:8].decode("ascii", errors="replace").strip()
    if first != "SIMPLE" or header.get("SIMPLE") is not True:
        raise FitsError("first card must be SIMPLE = T", 0)
    for i, key in enumerate(("BITPIX", "NAXIS")):
        if key not in header:
            raise FitsError(f"missing required {key} card", CARD * (i + 1))
    bitpix = header["BITPIX"]
    if bitpix not in BITPIX_DTYPES:
        raise UnsupportedFitsError(f"unsupported BITPIX {bitpix}; supported: {sorted(BITPIX_DTYPES)}", CARD)
    naxis = header["NAXIS"]
    axes = []
    for i in range(1, naxis + 1):
        if f"NAXIS{i}" not in header:
            raise FitsError(f"missing required NAXIS{i} card", CARD * (2 + i))
        axes.append(int(header[f"NAXIS{i}"]))
    shape = tuple(reversed(axes))
    dtype = np.dtype(BITPIX_DTYPES[bitpix])
    count = int(np.prod(shape)) if naxis else 0
    if offset + count * dtype.itemsize > len(data):
        raise FitsError(f"data unit truncated: need {count * dtype.itemsize} bytes", offset)
    raw = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    raw = raw.reshape(shape) if naxis else raw
    raw = raw.astype(dtype.newbyteorder("="))
    return FitsHDU(header, raw, bitpix, float(header.get("BSCALE", 1.0)), float(header.get("BZERO", 0.0)), cards)


def _format_value(value):
    if isinstance(value, (bool, np.bool_)):
        return f"{'T' if value else 'F':>20}"
    if isinstance(value, (int, np.integer)):
        return f"{int(value):>20}"
    if isinstance(value, (float, np.floating)):
        text = repr(float(value)).upper()
        if "." not in text and "E" not in text and "N" not in text:
            text += ".0"
        return f"{text:>20}"
    text = str(value).replace("'", "''")
    return f"'{text:<8}'"


def _card(key, value, comment=""):
    body = f"{key:<8}= {_format_value(value)}"
    if comment:
        body += f" / {comment}"
    if len(body) > CARD:
        raise FitsError(f"card for {key} longer than {CARD} characters")
    return f"{body:<{CARD}}".encode("ascii")


def write_fits(array, header=None, bitpix=None, bscale=None, bzero=None):
    """Serialise ``array`` as a primary HDU and return the bytes.

    ``array`` holds stored (raw) values; ``bitpix`` defaults from its dtype.
    Extra ``header`` entries are written after the structural cards;
    ``(value, comment)`` tuples add a comment.
    """
    array = np.asarray(array)
    if bitpix is None:
        inverse = {np.dtype(v).newbyteorder("="): k for k, v in BITPIX_DTYPES.items()}
        if array.dtype not in inverse:
            raise UnsupportedFitsError(f"no BITPIX for dtype {array.dtype}")
        bitpix = inverse[array.dtype]
    if bitpix not in BITPIX_DTYPES:
        raise UnsupportedFitsError(f"unsupported BITPIX {bitpix}")
    cards = [_card("SIMPLE", True), _card("BITPIX", bitpix), _card("NAXIS", array.ndim)]
    for i, n in enumerate(reversed(array.shape), start=1):
        cards.append(_card(f"NAXIS{i}", int(n)))
    if bscale is not None:
        cards.append(_card("BSCALE", float(bscale)))
    if bzero is not None:
        cards.append(_card("BZERO", float(bzero)))
    for key, value in (header or {}).items():
        if key.upper() in _RESERVED or (key.upper().startswith("NAXIS") and key[5:].isdigit()):
            continue
        if isinstance(value, tuple):
            cards.append(_card(key.upper(), *value))
        else:
            cards.append(_card(key.upper(), value))
    cards.append(f"{'END':<{CARD}}".encode("ascii"))
    head = b"".join(cards)
    head += b" " * (-len(head) % BLOCK)
    payload = np.ascontiguousarray(array, dtype=BITPIX_DTYPES[bitpix]).tobytes()
    payload += b"\0" * (-len(payload) % BLOCK)
    return head + payload


def read_fits(path):
    with open(path, "rb") as fh:
        return parse_fits(fh.read())
