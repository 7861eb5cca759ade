//! 2-bit packing of ternary codes: 0 -> 00, +1 -> 01, -1 -> 10; four codes
//! per byte with the first code in the two least-significant bits, final
//! byte zero-padded. Bit pattern 11 never appears in a valid stream.

use super::PipelineError;

/// Packed byte length for `count` codes.
pub fn packed_len(count: usize) -> usize {
    count.div_ceil(4)
}

pub fn pack_codes(codes: &[i8]) -> Result<Vec<u8>, PipelineError> {
    let mut out = vec![0u8; packed_len(codes.len())];
    for (index, &c) in codes.iter().enumerate() {
        let bits = match c {
            0 => 0b00u8,
            1 => 0b01,
            -1 => 0b10,
            _ => {
                return Err(PipelineError::InvalidCode {
                    bits: c as u8 & 0b11,
                    index,
                })
            }
        };
        out[index / 4] |= bits << ((index % 4) * 2);
    }
    Ok(out)
}

pub fn unpack_codes(bytes: &[u8], count: usize) -> Result<Vec<i8>, PipelineError> {
    if count > bytes.len() * 4 {
        return Err(PipelineError::CodeCountMismatch {
            requested: count,
            available: bytes.len() * 4,
        });
    }
    let mut out = Vec::with_capacity(count);
    for index in 0..count {
        let bits = (bytes[index / 4] >> ((index % 4) * 2)) & 0b11;
        out.push(match bits {
            0b00 => 0,
            0b01 => 1,
            0b10 => -1,
            _ => return Err(PipelineError::InvalidCode { bits, index }),
        });
    }
    // Padding slots in the final byte must be zero; anything else is
    // corruption.
    for index in count..bytes.len() * 4 {
        let bits = (bytes[index / 4] >> ((index % 4) * 2)) & 0b11;
        if bits != 0 {
            return Err(PipelineError::InvalidCode { bits, index });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pack_example_byte() {
        assert_eq!(pack_codes(&[1, -1, 0, 1]).unwrap(), vec![0x49]);
    }

    #[test]
    fn pack_empty() {
        assert_eq!(pack_codes(&[]).unwrap(), Vec::<u8>::new());
        assert_eq!(unpack_codes(&[], 0).unwrap(), Vec::<i8>::new());
    }

    #[test]
    fn pack_five_codes_pads_second_byte() {
        let bytes = pack_codes(&[1, 1, 1, 1, -1]).unwrap();
        assert_eq!(bytes.len(), 2);
        assert_eq!(bytes[1], 0b0000_0010);
        assert_eq!(unpack_codes(&bytes, 5).unwrap(), vec![1, 1, 1, 1, -1]);
    }

    #[test]
    fn unpack_rejects_code_11() {
        let err = unpack_codes(&[0b0000_1101], 4).unwrap_err();
        assert!(matches!(err, PipelineError::InvalidCode { bits: 0b11, index: 1 }));
    }

    #[test]
    fn unpack_rejects_nonzero_padding() {
        // 3 codes requested, 4th slot holds 01.
        let err = unpack_codes(&[0b0100_0000], 3).unwrap_err();
        assert!(matches!(err, PipelineError::InvalidCode { bits: 0b01, index: 3 }));
    }

    #[test]
    fn unpack_rejects_short_buffer() {
        let err = unpack_codes(&[0x00], 5).unwrap_err();
        assert!(matches!(
            err,
            PipelineError::CodeCountMismatch { requested: 5, available: 4 }
        ));
    }

    #[test]
    fn pack_rejects_out_of_alphabet() {
        assert!(matches!(
            pack_codes(&[0, 3]).unwrap_err(),
            PipelineError::InvalidCode { index: 1, .. }
        ));
    }

    proptest! {
        #[test]
        fn round_trip(codes in proptest::collection::vec(-1i8..=1, 0..200)) {
            let bytes = pack_codes(&codes).unwrap();
            prop_assert_eq!(bytes.len(), packed_len(codes.len()));
            prop_assert_eq!(unpack_codes(&bytes, codes.len()).unwrap(), codes);
        }
    }
}
