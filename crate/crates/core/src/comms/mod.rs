//! Message layer: messages, the binary wire codec, an in-process hub and a
//! TCP broker behind one [`Transport`] contract.

mod codec;
mod hub;
mod message;
mod tcp;

pub use codec::{
    decode, decode_frame, decode_message, encode, encode_body, encode_frame, CodecError, Frame, HEADER_LEN, MAGIC,
    VERSION,
};
pub use hub::{CommError, Endpoint, HubConfig, InProcessHub, Transport};
pub use message::{Message, Payload, Recipient, TaskAction, TaskMessage};
pub use tcp::{TcpBroker, TcpTransport};
