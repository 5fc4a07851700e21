//! Feature vectors for (user, item) pairs.
//!
//! Layout, for latent dimension `d`, `g` genres:
//!
//! | offset            | feature                                          |
//! |-------------------|--------------------------------------------------|
//! | `0..d`            | user latent                                      |
//! | `d..2d`           | item latent                                      |
//! | `2d`              | user-item latent dot product                     |
//! | `2d+1`            | `ln(1 + popularity)`                             |
//! | `2d+2..2d+2+g`    | item genre one-hot                               |
//! | next              | genre matches user preference (0/1)              |
//! | next              | user fatigue                                     |
//! | next              | user signup recency                              |
//! | next              | user language code                               |
//! | next 4            | L2 head affinity, head log-popularity, tail affinity, tail log-popularity |
//!
//! The L2 head is the first `ceil(m / 2)` attached items, the tail the rest.
//! Aggregates over an empty part are 0.

use crate::error::Result;
use crate::simulator::{ItemId, UserId, World};

pub fn feature_count(world: &World) -> usize {
    2 * world.config.latent_dim + 2 + world.config.n_genres + 4 + 4
}

pub fn feature_names(world: &World) -> Vec<String> {
    let d = world.config.latent_dim;
    let mut names = Vec::with_capacity(feature_count(world));
    names.extend((0..d).map(|i| format!("user_latent_{i}")));
    names.extend((0..d).map(|i| format!("item_latent_{i}")));
    names.push("latent_dot".into());
    names.push("log_popularity".into());
    names.extend((0..world.config.n_genres).map(|g| format!("genre_{g}")));
    for n in [
        "genre_match",
        "fatigue",
        "signup_recency",
        "language",
        "l2_head_affinity",
        "l2_head_log_popularity",
        "l2_tail_affinity",
        "l2_tail_log_popularity",
    ] {
        names.push(n.into());
    }
    names
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn extract_features(world: &World, user: UserId, item: ItemId) -> Result<Vec<f64>> {
    let u = world.user(user)?;
    let it = world.item(item)?;
    let mut x = Vec::with_capacity(feature_count(world));
    x.extend_from_slice(&u.latent);
    x.extend_from_slice(&it.latent);
    x.push(dot(&u.latent, &it.latent));
    x.push(it.popularity.ln_1p());
    x.extend((0..world.config.n_genres as u32).map(|g| f64::from(u8::from(g == it.genre))));
    x.push(f64::from(u8::from(u.genre_pref == it.genre)));
    x.push(u.fatigue);
    x.push(u.signup_recency);
    x.push(f64::from(u.language));

    let l2 = world.l2_list(item);
    let (head, tail) = l2.split_at(l2.len().div_ceil(2));
    for part in [head, tail] {
        if part.is_empty() {
            x.extend([0.0, 0.0]);
            continue;
        }
        let n = part.len() as f64;
        let (aff, pop) = part.iter().fold((0.0, 0.0), |(a, p), b| {
            let b = &world.items[b.index()];
            (a + dot(&u.latent, &b.latent), p + b.popularity.ln_1p())
        });
        x.extend([aff / n, pop / n]);
    }
    debug_assert_eq!(x.len(), feature_count(world));
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{build_world, WorldConfig};

    fn world() -> World {
        let cfg = WorldConfig {
            n_users: 10,
            n_items: 40,
            slate_size: 5,
            l2_size: 3,
            ..WorldConfig::default()
        };
        build_world(&cfg, 42).unwrap()
    }

    fn dot_offset(w: &World) -> usize {
        2 * w.config.latent_dim
    }

    #[test]
    fn orthogonal_latents_give_zero_dot() {
        let mut w = world();
        w.users[0].latent = (0..8).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
        w.items[0].latent = (0..8).map(|i| if i == 1 { 1.0 } else { 0.0 }).collect();
        let x = extract_features(&w, UserId(0), ItemId(0)).unwrap();
        assert_eq!(x[dot_offset(&w)], 0.0);
    }

    #[test]
    fn unit_latents_give_unit_dot() {
        let mut w = world();
        let v = vec![1.0 / 8f64.sqrt(); 8];
        w.users[0].latent = v.clone();
        w.items[0].latent = v;
        let x = extract_features(&w, UserId(0), ItemId(0)).unwrap();
        assert!((x[dot_offset(&w)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stable_across_runs() {
        let a = extract_features(&world(), UserId(0), ItemId(0)).unwrap();
        let b = extract_features(&world(), UserId(0), ItemId(0)).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.len(), feature_count(&world()));
        assert_eq!(feature_names(&world()).len(), a.len());
    }

    #[test]
    fn unknown_ids_are_errors() {
        assert!(extract_features(&world(), UserId(99), ItemId(0)).is_err());
        assert!(extract_features(&world(), UserId(0), ItemId(99)).is_err());
    }

    #[test]
    fn no_l2_means_zero_l2_features() {
        let cfg = WorldConfig {
            n_users: 4,
            n_items: 20,
            slate_size: 5,
            l2_size: 0,
            ..WorldConfig::default()
        };
        let w = build_world(&cfg, 1).unwrap();
        let x = extract_features(&w, UserId(1), ItemId(2)).unwrap();
        assert!(x[x.len() - 4..].iter().all(|v| *v == 0.0));
    }
}
