use url::{Host, Url};

/// Returns the registrable domain (public-suffix aware) of a URL or bare host.
///
/// `https://news.bbc.co.uk/x` → `bbc.co.uk`. Hosts without a registrable
/// domain (IP literals, `localhost`) are returned as-is, lowercased.
/// The function is idempotent: feeding its output back in returns the same
/// string.
pub fn registrable_domain(url_or_host: &str) -> Option<String> {
    let trimmed = url_or_host.trim();
    if trimmed.is_empty() {
        return None;
    }
    let parsed = match Url::parse(trimmed) {
        Ok(u) if u.host_str().is_some() => u,
        _ => Url::parse(&format!("http://{trimmed}")).ok()?,
    };
    match parsed.host()? {
        Host::Ipv4(ip) => return Some(ip.to_string()),
        Host::Ipv6(ip) => return Some(format!("[{ip}]")),
        Host::Domain(_) => {}
    }
    let host = parsed.host_str()?.trim_end_matches('.').to_ascii_lowercase();
    if host.is_empty() {
        return None;
    }
    match psl::domain_str(&host) {
        Some(d) => Some(d.to_string()),
        None => Some(host),
    }
}
