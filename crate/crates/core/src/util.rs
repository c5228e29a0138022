use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

/// Hex SHA-256 of `text`.
pub fn fingerprint(text: &str) -> String {
    crate::corpus::hex_string(&Sha256::digest(text.as_bytes()))
}

/// Maps `f` over `items` with at most `limit` calls in flight. Output order
/// follows input order regardless of completion order.
pub fn bounded_map<T, R, F>(items: &[T], limit: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let limit = limit.clamp(1, items.len().max(1));
    if limit == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..limit {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = f(i, item);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots.into_iter().map(|s| s.into_inner().unwrap().expect("every slot filled")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounded_map_preserves_order() {
        let items: Vec<u64> = (0..57).collect();
        let out = bounded_map(&items, 8, |i, x| {
            std::thread::sleep(std::time::Duration::from_micros((57 - x) * 10));
            (i as u64) * 100 + x
        });
        assert_eq!(out, items.iter().map(|x| x * 101).collect::<Vec<_>>());
        assert!(bounded_map(&Vec::<u8>::new(), 4, |_, x| *x).is_empty());
    }

    #[test]
    fn fingerprint_is_sha256() {
        assert_eq!(fingerprint("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
