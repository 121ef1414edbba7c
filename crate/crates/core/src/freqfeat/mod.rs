//! Frequency and structural features: counts, TF-IDF, character n-grams,
//! tweet/author structure, and PCA reduction. Every fitted state here is
//! learned from training rows only and frozen afterwards.

mod block;
pub(crate) mod pca;
mod structural;
mod text;

pub use block::{load_block, save_block, BlockKind, FeatureBlock};
pub use pca::{pca_fit, pca_transform, PcaModel};
pub use structural::{
    mention_count, structural_features, Communities, StructuralLayout, HOUR_BUCKETS,
};
pub use text::{
    char_ngrams, chargram_features, tfidf_features, unigram_features, CharGramVectorizer, TfIdfModel, Vocabulary,
};

use serde::{Deserialize, Serialize};

/// The named frequency features a run may select.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreqFeature {
    Unigram,
    TfidfUnigram,
    Chargrams,
    TfidfChargrams,
    Hashtags,
    Mentions,
    PunctuationMarks,
    Length,
    NetworkQuoteCommunity,
    NetworkReplyCommunity,
    NetworkRetweetCommunity,
    NetworkFriendCommunity,
    UserInfoBio,
    TweetInfoCreateAt,
}

impl FreqFeature {
    pub const ALL: [FreqFeature; 14] = [
        FreqFeature::Unigram,
        FreqFeature::TfidfUnigram,
        FreqFeature::Chargrams,
        FreqFeature::TfidfChargrams,
        FreqFeature::Hashtags,
        FreqFeature::Mentions,
        FreqFeature::PunctuationMarks,
        FreqFeature::Length,
        FreqFeature::NetworkQuoteCommunity,
        FreqFeature::NetworkReplyCommunity,
        FreqFeature::NetworkRetweetCommunity,
        FreqFeature::NetworkFriendCommunity,
        FreqFeature::UserInfoBio,
        FreqFeature::TweetInfoCreateAt,
    ];

    /// Name as written in settings strings.
    pub fn settings_name(self) -> &'static str {
        match self {
            FreqFeature::Unigram => "unigram",
            FreqFeature::TfidfUnigram => "Tfidf_unigram",
            FreqFeature::Chargrams => "chargrams",
            FreqFeature::TfidfChargrams => "Tfidf_chargrams",
            FreqFeature::Hashtags => "hashtags",
            FreqFeature::Mentions => "mentions",
            FreqFeature::PunctuationMarks => "puntuactionmarks",
            FreqFeature::Length => "length",
            FreqFeature::NetworkQuoteCommunity => "network_quote_community",
            FreqFeature::NetworkReplyCommunity => "network_reply_community",
            FreqFeature::NetworkRetweetCommunity => "network_retweet_community",
            FreqFeature::NetworkFriendCommunity => "network_friend_community",
            FreqFeature::UserInfoBio => "userinfobio",
            FreqFeature::TweetInfoCreateAt => "tweetinfocreateat",
        }
    }

    /// Case-insensitive lookup; also accepts the correctly spelled
    /// `punctuationmarks`.
    pub fn from_settings_name(name: &str) -> Option<Self> {
        let lower = name.trim().to_ascii_lowercase();
        if lower == "punctuationmarks" {
            return Some(FreqFeature::PunctuationMarks);
        }
        Self::ALL
            .into_iter()
            .find(|f| f.settings_name().to_ascii_lowercase() == lower)
    }

    pub fn uses_graph(self) -> bool {
        matches!(
            self,
            FreqFeature::NetworkQuoteCommunity
                | FreqFeature::NetworkReplyCommunity
                | FreqFeature::NetworkRetweetCommunity
                | FreqFeature::NetworkFriendCommunity
        )
    }
}
