use std::io::Cursor;

use pnp_core::bridge::{decode_hello, decode_request, decode_response, encode_request, serve, ProtocolError};
use pnp_core::{ImageTensor, Shape};
use proptest::prelude::*;

fn tensor(shape: Shape, seed: u32) -> ImageTensor {
    ImageTensor::from_fn(shape, |i| f64::from((i as u32).wrapping_mul(seed | 1) % 1000) / 64.0)
}

proptest! {
    #[test]
    fn served_session_round_trips(c in 1usize..4, h in 1usize..9, w in 1usize..9, eps in 1e-4f64..1.0, seed in any::<u32>()) {
        let shape = Shape::new(c, h, w);
        let x = tensor(shape, seed);
        let mut input = Vec::new();
        input.extend(encode_request(eps, &x));
        input.extend(encode_request(eps * 2.0, &x));
        let mut output = Vec::new();
        let mut seen = Vec::new();
        serve(&mut Cursor::new(input), &mut output, |e, t| {
            seen.push(e);
            Ok(t.scale(2.0))
        })
        .unwrap();
        prop_assert_eq!(&seen, &vec![eps, eps * 2.0]);
        let mut r = Cursor::new(output);
        decode_hello(&mut r).unwrap();
        for _ in 0..2 {
            let y = decode_response(&mut r, shape).unwrap();
            prop_assert_eq!(y, x.scale(2.0));
        }
    }

    #[test]
    fn truncated_frames_are_errors(cut in 0usize..40) {
        let x = tensor(Shape::new(1, 3, 3), 5);
        let frame = encode_request(0.1, &x);
        let cut = cut.min(frame.len() - 1);
        let res = decode_request(&mut Cursor::new(&frame[..cut]));
        match res {
            Ok(None) => prop_assert_eq!(cut, 0),
            Ok(Some(_)) => prop_assert!(false, "decoded a truncated frame"),
            Err(_) => prop_assert!(cut > 0),
        }
    }
}

#[test]
fn error_status_reaches_the_client() {
    let x = tensor(Shape::new(1, 2, 2), 3);
    let mut output = Vec::new();
    serve(&mut Cursor::new(encode_request(0.5, &x)), &mut output, |_, _| Err(7)).unwrap();
    let mut r = Cursor::new(output);
    decode_hello(&mut r).unwrap();
    assert!(matches!(
        decode_response(&mut r, x.shape()),
        Err(ProtocolError::Status(7))
    ));
}

#[test]
fn wrong_response_shape_is_rejected() {
    let x = tensor(Shape::new(1, 2, 3), 3);
    let mut output = Vec::new();
    serve(&mut Cursor::new(encode_request(0.5, &x)), &mut output, |_, _| {
        Ok(ImageTensor::zeros(Shape::new(1, 3, 2)))
    })
    .unwrap();
    let mut r = Cursor::new(output);
    decode_hello(&mut r).unwrap();
    assert!(matches!(
        decode_response(&mut r, x.shape()),
        Err(ProtocolError::ShapeMismatch { .. })
    ));
}
