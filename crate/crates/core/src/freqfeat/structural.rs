use std::ops::Range;

use super::FreqFeature;
use crate::corpus::{preprocess, PreprocessMode, Tweet};
use crate::netgraph::{CommunityMap, Relation};

pub const HOUR_BUCKETS: usize = 24;

/// Community assignments for each relation type, in the fixed
/// quote / reply / retweet / friend order used by the feature layout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Communities {
    pub quote: CommunityMap,
    pub reply: CommunityMap,
    pub retweet: CommunityMap,
    pub friend: CommunityMap,
}

impl Communities {
    pub fn get(&self, relation: Relation) -> &CommunityMap {
        match relation {
            Relation::Quote => &self.quote,
            Relation::Reply => &self.reply,
            Relation::Retweet => &self.retweet,
            Relation::Friend => &self.friend,
        }
    }

    pub fn get_mut(&mut self, relation: Relation) -> &mut CommunityMap {
        match relation {
            Relation::Quote => &mut self.quote,
            Relation::Reply => &mut self.reply,
            Relation::Retweet => &mut self.retweet,
            Relation::Friend => &mut self.friend,
        }
    }
}

const LAYOUT_RELATIONS: [(Relation, FreqFeature); 4] = [
    (Relation::Quote, FreqFeature::NetworkQuoteCommunity),
    (Relation::Reply, FreqFeature::NetworkReplyCommunity),
    (Relation::Retweet, FreqFeature::NetworkRetweetCommunity),
    (Relation::Friend, FreqFeature::NetworkFriendCommunity),
];

/// Column layout of [`structural_features`]:
///
/// | columns | content |
/// |---|---|
/// | 0 | punctuation-mark count |
/// | 1 | hashtag count |
/// | 2 | token count |
/// | next | one-hot community per relation: quote, reply, retweet, friend |
/// | next 2 | bio present flag, bio token count |
/// | last 24 | one-hot creation hour (UTC) |
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralLayout {
    pub columns: Vec<String>,
    ranges: Vec<(FreqFeature, Range<usize>)>,
}

impl StructuralLayout {
    pub fn new(communities: &Communities) -> Self {
        let mut columns = Vec::new();
        let mut ranges = Vec::new();
        let mut push = |feature: FreqFeature, names: Vec<String>| {
            let start = columns.len();
            columns.extend(names);
            ranges.push((feature, start..columns.len()));
        };
        push(FreqFeature::PunctuationMarks, vec!["punctuation".into()]);
        push(FreqFeature::Hashtags, vec!["hashtags".into()]);
        push(FreqFeature::Length, vec!["length".into()]);
        for (relation, feature) in LAYOUT_RELATIONS {
            let n = communities.get(relation).count;
            push(feature, (0..n).map(|c| format!("{relation}_community_{c}")).collect());
        }
        push(FreqFeature::UserInfoBio, vec!["bio_present".into(), "bio_length".into()]);
        push(
            FreqFeature::TweetInfoCreateAt,
            (0..HOUR_BUCKETS).map(|h| format!("hour_{h:02}")).collect(),
        );
        StructuralLayout { columns, ranges }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn range(&self, feature: FreqFeature) -> Option<Range<usize>> {
        self.ranges.iter().find(|(f, _)| *f == feature).map(|(_, r)| r.clone())
    }
}

fn is_punctuation_token(tok: &str) -> bool {
    let mut chars = tok.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => c.is_ascii_punctuation() || "«»“”‘’…–—¿¡".contains(c),
        _ => false,
    }
}

/// Hand-crafted per-tweet vector; see [`StructuralLayout`] for the column
/// order. Authors missing from a relation's communities get an all-zero
/// block for that relation.
pub fn structural_features(tweet: &Tweet, communities: &Communities) -> Vec<f64> {
    let tokens = preprocess(&tweet.text, PreprocessMode::TwitaClean);
    let mut out = vec![
        tokens.iter().filter(|t| is_punctuation_token(t)).count() as f64,
        tokens.iter().filter(|t| t.starts_with('#') && t.len() > 1).count() as f64,
        tokens.len() as f64,
    ];
    for (relation, _) in LAYOUT_RELATIONS {
        let map = communities.get(relation);
        let mut block = vec![0.0; map.count];
        if let Some(&c) = map.assignment.get(&tweet.author_id) {
            block[c] = 1.0;
        }
        out.extend(block);
    }
    match &tweet.bio {
        Some(bio) => out.extend([1.0, preprocess(bio, PreprocessMode::TwitaClean).len() as f64]),
        None => out.extend([0.0, 0.0]),
    }
    let mut hours = [0.0; HOUR_BUCKETS];
    hours[tweet.hour() as usize] = 1.0;
    out.extend(hours);
    out
}

pub fn mention_count(tweet: &Tweet) -> f64 {
    preprocess(&tweet.text, PreprocessMode::TwitaClean)
        .iter()
        .filter(|t| t.starts_with('@') && t.len() > 1)
        .count() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_timestamp;

    fn tweet(author: &str, text: &str, bio: Option<&str>) -> Tweet {
        Tweet {
            id: "t".into(),
            author_id: author.into(),
            text: text.into(),
            created_at: parse_timestamp("2020-01-01 13:05:00").unwrap(),
            bio: bio.map(str::to_string),
            label: None,
        }
    }

    fn communities() -> Communities {
        let mut c = Communities::default();
        c.retweet = CommunityMap::from_pairs([("alice", 2), ("bob", 0), ("carol", 1), ("dan", 3)]);
        c.friend = CommunityMap::from_pairs([("alice", 0), ("bob", 1)]);
        c
    }

    #[test]
    fn unknown_author_plain_tweet() {
        let c = communities();
        let v = structural_features(&tweet("zed", "ciao !", None), &c);
        let layout = StructuralLayout::new(&c);
        assert_eq!(v.len(), layout.width());
        assert_eq!(&v[..3], &[1.0, 0.0, 2.0]);
        assert!(v[3..3 + 4 + 2].iter().all(|&x| x == 0.0));
        let bio = layout.range(FreqFeature::UserInfoBio).unwrap();
        assert_eq!(&v[bio], &[0.0, 0.0]);
        let hours = layout.range(FreqFeature::TweetInfoCreateAt).unwrap();
        assert_eq!(v[hours.start + 13], 1.0);
        assert_eq!(v[hours].iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn community_one_hot() {
        let c = communities();
        let layout = StructuralLayout::new(&c);
        let r = layout.range(FreqFeature::NetworkRetweetCommunity).unwrap();
        let v = structural_features(&tweet("alice", "#sardine oggi", Some("una bio")), &c);
        assert_eq!(&v[r.clone()], &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(v[1], 1.0);
        assert_eq!(&v[layout.range(FreqFeature::UserInfoBio).unwrap()], &[1.0, 2.0]);
        assert!(layout.range(FreqFeature::NetworkQuoteCommunity).unwrap().is_empty());

        let other = structural_features(&tweet("alice", "tutt'altro testo, davvero", None), &c);
        assert_eq!(&v[r.clone()], &other[r]);
    }

    #[test]
    fn mentions() {
        assert_eq!(mention_count(&tweet("a", "@x ciao @y @", None)), 2.0);
    }
}
