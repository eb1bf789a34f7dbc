//! Routing: packet formats, neighbor tables, disjoint path selection and
//! forwarding tables. The protocol handlers that drive them live in
//! [`crate::network`].

pub mod forwarding;
pub mod neighbor;
pub mod packet;
pub mod selection;

pub use forwarding::{ForwardingEntry, ForwardingTable, RouteKey};
pub use neighbor::NeighborTable;
pub use packet::{Body, DataHeader, Packet, PacketKind, RepairContext, RerrBody, RrepBody, RreqBody, RreqId};
pub use selection::{node_disjoint, select_disjoint, PathRecord};
