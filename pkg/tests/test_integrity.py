import itertools
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from amstpa_lab.integrity import (
    HEADER_SIZE,
    MAGIC,
    MismatchKind,
    SecdedBlock,
    crc32,
    read_header,
    secded_decode,
    secded_encode,
    verify,
    wrap,
)


def crc32_bitserial(data: bytes) -> int:
    """Independent reference: bit-at-a-time reflected CRC-32."""
    crc = 0xFFFFFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = (crc >> 1) ^ 0xEDB88320 if crc & 1 else crc >> 1
    return crc ^ 0xFFFFFFFF


class TestCrc32:
    def test_empty(self):
        assert crc32(b"") == 0x00000000
        assert crc32_bitserial(b"") == 0x00000000

    def test_standard_check_value(self):
        assert crc32_bitserial(b"123456789") == 0xCBF43926
        assert crc32(b"123456789") == 0xCBF43926

    @given(st.binary(max_size=512))
    def test_matches_bit_serial_oracle(self, data):
        assert crc32(data) == crc32_bitserial(data)

    @given(st.binary(min_size=1, max_size=64), st.data())
    def test_single_bit_flip_changes_crc(self, data, pick):
        bit = pick.draw(st.integers(min_value=0, max_value=len(data) * 8 - 1))
        mutated = bytearray(data)
        mutated[bit // 8] ^= 1 << (bit % 8)
        assert crc32(bytes(mutated)) != crc32(data)


def flip(block: SecdedBlock, bit: int) -> SecdedBlock:
    if bit < 64:
        return SecdedBlock(block.data ^ (1 << bit), block.check)
    return SecdedBlock(block.data, block.check ^ (1 << (bit - 64)))


class TestSecded:
    def test_zero_codeword(self):
        block = secded_encode(0)
        assert block.check == 0
        result = secded_decode(block)
        assert (result.data, result.corrected, result.double_error) == (0, 0, False)

    def test_out_of_range_data(self):
        with pytest.raises(ValueError):
            secded_encode(1 << 64)
        with pytest.raises(ValueError):
            secded_encode(-1)

    def test_all_72_single_flips_corrected(self):
        block = secded_encode(0xDEADBEEF00000001)
        for bit in range(72):
            result = secded_decode(flip(block, bit))
            assert not result.double_error
            assert result.corrected == 1
            assert result.data == block.data, f"bit {bit}"

    def test_all_2556_double_flips_detected(self):
        block = secded_encode(0xDEADBEEF00000001)
        count = 0
        for i, j in itertools.combinations(range(72), 2):
            result = secded_decode(flip(flip(block, i), j))
            assert result.double_error, (i, j)
            count += 1
        assert count == 2556

    @given(st.integers(min_value=0, max_value=(1 << 64) - 1))
    def test_encode_decode_round_trip(self, data):
        assert secded_decode(secded_encode(data)).data == data


class TestEnvelope:
    @given(st.binary(max_size=4096), st.integers(min_value=0, max_value=(1 << 64) - 1))
    def test_verify_wrap_identity(self, payload, records):
        result = verify(wrap(payload, records))
        assert result.ok
        assert result.payload == payload
        assert result.record_count == records
        assert result.corrected_bits == 0

    def test_one_mebibyte_round_trip(self):
        payload = random.Random(99).randbytes(1 << 20)
        result = verify(wrap(payload, 12345))
        assert result.ok and result.payload == payload

    def test_header_layout(self):
        wrapped = wrap(b"abc", 2)
        assert wrapped[:4] == MAGIC
        assert len(wrapped) == HEADER_SIZE + 3
        env = read_header(wrapped)
        assert env.payload_len == 3
        assert env.record_count == 2
        assert not env.ecc_present
        assert env.crc32 == crc32(b"abc")

    def test_bad_magic(self):
        wrapped = bytearray(wrap(b"abc", 1))
        wrapped[0] ^= 0xFF
        result = verify(bytes(wrapped))
        assert not result.ok
        assert result.mismatch is MismatchKind.BAD_MAGIC

    def test_truncated_header(self):
        assert verify(wrap(b"abc", 1)[:10]).mismatch is MismatchKind.LENGTH_MISMATCH

    def test_truncated_payload(self):
        result = verify(wrap(b"abcdef", 1)[:-2])
        assert result.mismatch is MismatchKind.LENGTH_MISMATCH
        assert "got" in result.detail

    def test_single_flip_without_ecc_is_crc_mismatch(self):
        wrapped = bytearray(wrap(b"hello world", 1))
        wrapped[HEADER_SIZE + 4] ^= 0x20
        result = verify(bytes(wrapped))
        assert result.mismatch is MismatchKind.CRC_MISMATCH

    def test_single_flip_with_ecc_corrected(self):
        wrapped = bytearray(wrap(b"hello world", 1, with_ecc=True))
        wrapped[HEADER_SIZE + 4] ^= 0x20
        result = verify(bytes(wrapped))
        assert result.ok
        assert result.corrected_bits == 1
        assert result.payload == b"hello world"

    def test_exhaustive_single_flips_small_payload(self):
        payload = random.Random(7).randbytes(64)
        wrapped = wrap(payload, 3, with_ecc=True)
        for bit in range(HEADER_SIZE * 8, len(wrapped) * 8):
            mutated = bytearray(wrapped)
            mutated[bit // 8] ^= 1 << (bit % 8)
            result = verify(bytes(mutated))
            assert result.ok, f"bit {bit}: {result.mismatch}"
            assert result.corrected_bits == 1
            assert result.payload == payload

    def test_sampled_single_flips_kibibyte_payload(self):
        payload = random.Random(8).randbytes(1024)
        wrapped = wrap(payload, 11, with_ecc=True)
        for bit in range(HEADER_SIZE * 8, len(wrapped) * 8, 97):
            mutated = bytearray(wrapped)
            mutated[bit // 8] ^= 1 << (bit % 8)
            result = verify(bytes(mutated))
            assert result.ok and result.corrected_bits == 1 and result.payload == payload

    def test_double_flip_in_one_block_uncorrectable(self):
        wrapped = bytearray(wrap(b"A" * 16, 1, with_ecc=True))
        wrapped[HEADER_SIZE] ^= 0x01
        wrapped[HEADER_SIZE + 3] ^= 0x01  # same 8-byte block
        result = verify(bytes(wrapped))
        assert result.mismatch is MismatchKind.UNCORRECTABLE_ECC

    def test_ecc_flag_flip_detected(self):
        wrapped = bytearray(wrap(b"hello world", 1))
        wrapped[HEADER_SIZE - 1] ^= 0x01  # ecc_present byte
        assert verify(bytes(wrapped)).mismatch is MismatchKind.LENGTH_MISMATCH

    def test_crc_field_flip_detected(self):
        wrapped = bytearray(wrap(b"hello world", 1))
        wrapped[20] ^= 0x01  # stored crc32 field
        assert verify(bytes(wrapped)).mismatch is MismatchKind.CRC_MISMATCH

    def test_empty_payload(self):
        result = verify(wrap(b"", 0))
        assert result.ok and result.payload == b""

    def test_record_count_bounds(self):
        with pytest.raises(ValueError):
            wrap(b"x", -1)
        with pytest.raises(ValueError):
            wrap(b"x", 1 << 64)
