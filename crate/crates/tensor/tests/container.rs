use drnet_tensor::container::{self, Entry};
use drnet_tensor::{track_peak_elements, Parameter, Shape, Tensor};
use proptest::prelude::*;

proptest! {
    #[test]
    fn drt1_round_trip(entries in prop::collection::vec(
        ("[a-z.0-9]{1,12}", prop::collection::vec(0u32..4, 0..4)).prop_flat_map(|(name, dims)| {
            let n: u32 = dims.iter().product();
            (Just(name), Just(dims), prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), n as usize))
        }),
        0..5,
    )) {
        let entries: Vec<Entry> = entries.into_iter().map(|(n, d, v)| Entry::new(n, d, v).unwrap()).collect();
        let mut buf = Vec::new();
        container::write_entries(&mut buf, &entries).unwrap();
        let back = container::read_entries(&buf[..]).unwrap();
        prop_assert_eq!(back, entries);
    }
}

#[test]
fn parameter_round_trips_through_entry() {
    let mut p = Parameter::new("decoder.head5.weight", Shape::new(1, 3, 1, 1), vec![1, 3, 1, 1], vec![0.1, -0.2, 0.3]).unwrap();
    let e = p.to_entry();
    assert_eq!(e.dims, vec![1, 3, 1, 1]);
    let before = p.values().to_vec();
    p.set_values(vec![0.0; 3]).unwrap();
    p.load_entry(&e).unwrap();
    assert_eq!(p.values(), before.as_slice());

    let wrong = Entry::new("decoder.head5.weight", vec![3], vec![0.0; 3]).unwrap();
    assert!(p.load_entry(&wrong).is_err());
    assert!(Parameter::new("", Shape::scalar(), vec![1], vec![0.0]).is_err());
}

#[test]
fn peak_counter_sees_only_scope_allocations() {
    let outside = Tensor::zeros((1, 1, 10, 10));
    let ((), peak) = track_peak_elements(|| {
        let a = Tensor::zeros((1, 1, 4, 4));
        let b = Tensor::zeros((1, 1, 2, 2));
        drop(a);
        let _c = Tensor::zeros((1, 1, 3, 3));
        drop(b);
        let _ = &outside;
    });
    assert_eq!(peak, 16 + 4);
}
