//! Scenarios shipped with the binary, addressable as `bundled:<id>`.

pub const BUNDLED: &[(&str, &str)] = &[
    ("baseline", include_str!("../scenarios/baseline.toml")),
    ("blacklist", include_str!("../scenarios/blacklist.toml")),
    ("conversation-clone", include_str!("../scenarios/conversation-clone.toml")),
    ("enumeration", include_str!("../scenarios/enumeration.toml")),
    ("figures-1-5", include_str!("../scenarios/figures-1-5.toml")),
    ("hit-delay", include_str!("../scenarios/hit-delay.toml")),
    ("ifa-limiter", include_str!("../scenarios/ifa-limiter.toml")),
    ("ifa-nonexistent", include_str!("../scenarios/ifa-nonexistent.toml")),
    ("overlay", include_str!("../scenarios/overlay.toml")),
    ("poisoning", include_str!("../scenarios/poisoning.toml")),
    ("pollution", include_str!("../scenarios/pollution.toml")),
    ("tc-estimate", include_str!("../scenarios/tc-estimate.toml")),
    ("timing-attack", include_str!("../scenarios/timing-attack.toml")),
];

pub fn get(id: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(k, _)| *k == id).map(|(_, v)| *v)
}

pub fn ids() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(k, _)| *k)
}
