// SPDX-License-Identifier: Apache-2.0

#include <hgfm/archive.hpp>
#include <hgfm/error.hpp>

#include "fixtures.hpp"

#include <fstream>
#include <limits>

#include <gtest/gtest.h>

namespace
{
	using namespace hgfm;
	using namespace hgfm::testing;

	Archive sample()
	{
		Archive a;
		a.metadata = R"({"step":3})";
		const std::vector<float> f { 1.5f, -0.0f, std::numeric_limits<float>::denorm_min(), 3.0e38f, 7.0f, 8.0f };
		const std::vector<double> d { 0.1, -1e-300 };
		a.entries.push_back(ArchiveEntry::from_values<float>("w", { 2, 3 }, f));
		a.entries.push_back(ArchiveEntry::from_values<double>("adam.m.w", { 1, 2 }, d));
		return a;
	}

	std::vector<char> bytes(const std::filesystem::path &p)
	{
		std::ifstream in(p, std::ios::binary);
		return std::vector<char>(std::istreambuf_iterator<char>(in), { });
	}

	void write(const std::filesystem::path &p, const std::vector<char> &b)
	{
		std::ofstream out(p, std::ios::binary);
		out.write(b.data(), static_cast<std::streamsize>(b.size()));
	}
}

TEST(archive, round_trip_is_bit_exact)
{
	TempDir dir;
	const Archive a = sample();
	save_archive(a, dir / "x.h2gc");
	const Archive b = load_archive(dir / "x.h2gc");
	EXPECT_EQ(b.metadata, a.metadata);
	ASSERT_EQ(b.entries.size(), 2u);
	EXPECT_EQ(b.find("w")->values<float>(), a.entries[0].values<float>());
	EXPECT_EQ(b.find("w")->shape, (ad::Shape { 2, 3 }));
	EXPECT_EQ(b.find("adam.m.w")->values<double>(), a.entries[1].values<double>());
	EXPECT_EQ(b.find("nothing"), nullptr);
	EXPECT_THROW(b.find("w")->values<double>(), ValidationError);
}

TEST(archive, saving_twice_gives_identical_files)
{
	TempDir dir;
	save_archive(sample(), dir / "a.h2gc");
	save_archive(sample(), dir / "b.h2gc");
	EXPECT_EQ(bytes(dir / "a.h2gc"), bytes(dir / "b.h2gc"));
	EXPECT_EQ(archive_manifest_hash(dir / "a.h2gc"), archive_manifest_hash(dir / "b.h2gc"));
}

TEST(archive, corruption_detected)
{
	TempDir dir;
	save_archive(sample(), dir / "a.h2gc");
	std::vector<char> b = bytes(dir / "a.h2gc");

	std::vector<char> flipped = b;
	flipped[flipped.size() / 2] ^= 0x10;
	write(dir / "flipped.h2gc", flipped);
	EXPECT_THROW(load_archive(dir / "flipped.h2gc"), ValidationError);

	std::vector<char> magic = b;
	magic[0] = 'X';
	write(dir / "magic.h2gc", magic);
	EXPECT_THROW(load_archive(dir / "magic.h2gc"), ValidationError);

	write(dir / "short.h2gc", std::vector<char>(b.begin(), b.begin() + 10));
	EXPECT_THROW(load_archive(dir / "short.h2gc"), ValidationError);

	EXPECT_THROW(load_archive(dir / "missing.h2gc"), ValidationError);
}
