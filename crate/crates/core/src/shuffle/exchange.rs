//! Coded multicast within a group.
//!
//! Every member `U_k'` of a group `G` misses one chunk `D_[k']` that all other
//! members can compute. Each chunk is cut into `|G|-1` equal packets, packet
//! `i` going to the `i`-th member of `G \ {U_k'}` in ascending server order.
//! Member `U_m` broadcasts the XOR of all packets assigned to it; a receiver
//! strips every term it can compute itself and is left with one packet of its
//! own chunk per sender.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CamrError, Result};
use crate::ids::ServerId;

/// XOR broadcast of one group member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodedPacket {
    pub sender: ServerId,
    pub group: Vec<ServerId>,
    pub payload: Vec<u8>,
}

/// `holder` computes the chunk missing at `missing`, from its own data only.
pub trait ChunkSource {
    fn chunk(&self, holder: ServerId, missing: ServerId) -> Result<Vec<u8>>;
}

impl<F> ChunkSource for F
where
    F: Fn(ServerId, ServerId) -> Result<Vec<u8>>,
{
    fn chunk(&self, holder: ServerId, missing: ServerId) -> Result<Vec<u8>> {
        self(holder, missing)
    }
}

fn check_group(group: &[ServerId], width: usize) -> Result<usize> {
    if group.len() < 2 {
        return Err(CamrError::GroupTooSmall(group.len()));
    }
    let parts = group.len() - 1;
    if width == 0 || width % parts != 0 {
        return Err(CamrError::ValueWidthIndivisible { value_bytes: width, divisor: parts });
    }
    Ok(width / parts)
}

/// Index of `member`'s packet within chunk `D_[missing]`.
fn packet_index(group: &[ServerId], missing: ServerId, member: ServerId) -> usize {
    group
        .iter()
        .filter(|&&s| s != missing)
        .position(|&s| s == member)
        .expect("member belongs to group minus missing")
}

fn xor_into(acc: &mut [u8], other: &[u8]) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a ^= b;
    }
}

fn checked_chunk(source: &dyn ChunkSource, holder: ServerId, missing: ServerId, width: usize) -> Result<Vec<u8>> {
    let chunk = source.chunk(holder, missing)?;
    if chunk.len() != width {
        return Err(CamrError::WidthMismatch { expected: width, actual: chunk.len() });
    }
    Ok(chunk)
}

/// Broadcast of `sender`: XOR over every other member's chunk of the packet
/// assigned to `sender`.
pub fn encode_packet(group: &[ServerId], sender: ServerId, width: usize, source: &dyn ChunkSource) -> Result<CodedPacket> {
    let len = check_group(group, width)?;
    let mut payload = vec![0u8; len];
    for &missing in group.iter().filter(|&&s| s != sender) {
        let chunk = checked_chunk(source, sender, missing, width)?;
        let i = packet_index(group, missing, sender);
        xor_into(&mut payload, &chunk[i * len..(i + 1) * len]);
    }
    Ok(CodedPacket { sender, group: group.to_vec(), payload })
}

/// All `|G|` broadcasts, in group order.
pub fn encode_group(group: &[ServerId], width: usize, source: &dyn ChunkSource) -> Result<Vec<CodedPacket>> {
    group.iter().map(|&s| encode_packet(group, s, width, source)).collect()
}

/// Recover `receiver`'s missing chunk from the other members' broadcasts.
/// `source` is only queried with `holder == receiver`.
pub fn decode_chunk(
    group: &[ServerId],
    receiver: ServerId,
    packets: &[CodedPacket],
    width: usize,
    source: &dyn ChunkSource,
) -> Result<Vec<u8>> {
    let len = check_group(group, width)?;
    // receiver's own copies of everyone else's chunks
    let mut known = BTreeMap::new();
    for &missing in group.iter().filter(|&&s| s != receiver) {
        known.insert(missing, checked_chunk(source, receiver, missing, width)?);
    }
    let mut out = vec![0u8; width];
    for &sender in group.iter().filter(|&&s| s != receiver) {
        let packet = packets
            .iter()
            .find(|p| p.sender == sender)
            .ok_or(CamrError::MissingTransmission { stage: 0, sender, receiver })?;
        if packet.payload.len() != len {
            return Err(CamrError::WidthMismatch { expected: len, actual: packet.payload.len() });
        }
        let mut piece = packet.payload.clone();
        for &missing in group.iter().filter(|&&s| s != sender && s != receiver) {
            let i = packet_index(group, missing, sender);
            xor_into(&mut piece, &known[&missing][i * len..(i + 1) * len]);
        }
        let i = packet_index(group, receiver, sender);
        out[i * len..(i + 1) * len].copy_from_slice(&piece);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ExchangeOutcome {
    pub packets: Vec<CodedPacket>,
    pub decoded: BTreeMap<ServerId, Vec<u8>>,
}

impl ExchangeOutcome {
    pub fn total_bits(&self) -> u64 {
        self.packets.iter().map(|p| 8 * p.payload.len() as u64).sum()
    }
}

/// Encode every broadcast, then let every member decode its missing chunk.
pub fn coded_exchange(group: &[ServerId], width: usize, source: &dyn ChunkSource) -> Result<ExchangeOutcome> {
    let packets = encode_group(group, width, source)?;
    let decoded = group
        .iter()
        .map(|&r| Ok((r, decode_chunk(group, r, &packets, width, source)?)))
        .collect::<Result<_>>()?;
    Ok(ExchangeOutcome { packets, decoded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Chunks indexed by the missing member; a holder may never fetch its own.
    fn table(chunks: BTreeMap<ServerId, Vec<u8>>) -> impl Fn(ServerId, ServerId) -> Result<Vec<u8>> {
        move |holder, missing| {
            if holder == missing {
                return Err(CamrError::MissingLocalValue {
                    server: holder,
                    job: crate::ids::JobId(0),
                    subfile: 0,
                });
            }
            Ok(chunks[&missing].clone())
        }
    }

    fn ids(v: &[usize]) -> Vec<ServerId> {
        v.iter().map(|&s| ServerId(s)).collect()
    }

    #[test]
    fn three_member_exchange_matches_worked_example() {
        // chunks: circle for U1, star for U3, triangle for U5; two packets each
        let group = ids(&[1, 3, 5]);
        let circle = vec![0x11, 0x12];
        let star = vec![0x31, 0x32];
        let triangle = vec![0x51, 0x52];
        let chunks = BTreeMap::from([
            (ServerId(1), circle.clone()),
            (ServerId(3), star.clone()),
            (ServerId(5), triangle.clone()),
        ]);
        let src = table(chunks.clone());
        let out = coded_exchange(&group, 2, &src).unwrap();
        // U1 sends star[1] XOR triangle[1]; U3 and U5 each cancel the part they hold
        assert_eq!(out.packets[0].payload, vec![star[0] ^ triangle[0]]);
        assert_eq!(out.packets[1].payload, vec![circle[0] ^ triangle[1]]);
        assert_eq!(out.packets[2].payload, vec![circle[1] ^ star[1]]);
        assert_eq!(out.decoded, chunks);
        assert_eq!(out.total_bits(), 8 * 2 * 3 / 2);
    }

    #[test]
    fn pair_degenerates_to_swap() {
        let group = ids(&[2, 7]);
        let chunks = BTreeMap::from([(ServerId(2), vec![1, 2, 3]), (ServerId(7), vec![4, 5, 6])]);
        let out = coded_exchange(&group, 3, &table(chunks.clone())).unwrap();
        assert_eq!(out.packets[0].payload, vec![4, 5, 6]);
        assert_eq!(out.packets[1].payload, vec![1, 2, 3]);
        assert_eq!(out.decoded, chunks);
    }

    #[test]
    fn precondition_violations_surface() {
        let group = ids(&[1, 2, 3]);
        let src = |holder: ServerId, missing: ServerId| {
            if holder == ServerId(2) && missing == ServerId(3) {
                Err(CamrError::MissingLocalValue { server: holder, job: crate::ids::JobId(1), subfile: 1 })
            } else {
                Ok(vec![0u8; 4])
            }
        };
        assert!(matches!(
            coded_exchange(&group, 4, &src),
            Err(CamrError::MissingLocalValue { server: ServerId(2), .. })
        ));
        assert!(matches!(
            coded_exchange(&group, 3, &src),
            Err(CamrError::ValueWidthIndivisible { .. })
        ));
        assert_eq!(coded_exchange(&ids(&[1]), 4, &src).unwrap_err(), CamrError::GroupTooSmall(1));
    }

    #[test]
    fn corrupted_packet_breaks_decoding() {
        let group = ids(&[1, 3, 5]);
        let chunks = BTreeMap::from([
            (ServerId(1), vec![9, 8, 7, 6]),
            (ServerId(3), vec![5, 4, 3, 2]),
            (ServerId(5), vec![1, 0, 1, 0]),
        ]);
        let src = table(chunks.clone());
        let mut packets = encode_group(&group, 4, &src).unwrap();
        packets[0].payload[1] ^= 0x40;
        let u3 = decode_chunk(&group, ServerId(3), &packets, 4, &src).unwrap();
        assert_ne!(u3, chunks[&ServerId(3)]);
        let u1 = decode_chunk(&group, ServerId(1), &packets, 4, &src).unwrap();
        assert_eq!(u1, chunks[&ServerId(1)]);
        packets.remove(1);
        assert!(matches!(
            decode_chunk(&group, ServerId(1), &packets, 4, &src),
            Err(CamrError::MissingTransmission { sender: ServerId(3), .. })
        ));
    }

    proptest! {
        #[test]
        fn random_groups_round_trip(
            size in 2usize..=6,
            packet_len in 1usize..=5,
            seed_bytes in proptest::collection::vec(any::<u8>(), 6 * 25),
            base in 1usize..20,
        ) {
            let width = packet_len * (size - 1);
            let group: Vec<ServerId> = (0..size).map(|i| ServerId(base + 3 * i)).collect();
            let chunks: BTreeMap<_, _> = group
                .iter()
                .enumerate()
                .map(|(i, &s)| (s, seed_bytes[i * 25..i * 25 + width].to_vec()))
                .collect();
            let out = coded_exchange(&group, width, &table(chunks.clone())).unwrap();
            prop_assert_eq!(out.packets.len(), size);
            prop_assert_eq!(out.total_bits() * (size as u64 - 1), 8 * width as u64 * size as u64);
            prop_assert_eq!(out.decoded, chunks);
        }
    }
}
