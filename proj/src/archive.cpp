// SPDX-License-Identifier: Apache-2.0

#include <hgfm/archive.hpp>
#include <hgfm/error.hpp>
#include <hgfm/seeding.hpp>

#include <cstring>
#include <fstream>
#include <iterator>
#include <string_view>

namespace
{
	using namespace hgfm;

	constexpr char kMagic[4] = { 'H', '2', 'G', 'C' };
	constexpr std::uint32_t kVersion = 1;

	class Writer
	{
		public:
			template<typename T>
			void pod(const T &value)
			{
				const auto *p = reinterpret_cast<const std::uint8_t*>(&value);
				bytes.insert(bytes.end(), p, p + sizeof(T));
			}
			void raw(const void *data, std::size_t n)
			{
				const auto *p = static_cast<const std::uint8_t*>(data);
				bytes.insert(bytes.end(), p, p + n);
			}
			std::vector<std::uint8_t> bytes;
	};

	class Reader
	{
		public:
			explicit Reader(const std::vector<std::uint8_t> &data) :
					m_data(data)
			{
			}
			template<typename T>
			T pod()
			{
				T value;
				std::memcpy(&value, take(sizeof(T)), sizeof(T));
				return value;
			}
			const std::uint8_t* take(std::size_t n)
			{
				if (n > m_data.size() - m_pos)
					throw ValidationError("checkpoint archive is truncated");
				const std::uint8_t *p = m_data.data() + m_pos;
				m_pos += n;
				return p;
			}
			std::size_t position() const
			{
				return m_pos;
			}

		private:
			const std::vector<std::uint8_t> &m_data;
			std::size_t m_pos = 0;
	};

	std::size_t dtype_size(DType t)
	{
		switch (t)
		{
			case DType::F32:
				return 4;
			case DType::F64:
				return 8;
		}
		throw ValidationError("unknown dtype tag in checkpoint archive");
	}

	std::uint64_t hash_bytes(const std::uint8_t *data, std::size_t n)
	{
		return fnv1a64(std::string_view(reinterpret_cast<const char*>(data), n));
	}

	std::vector<std::uint8_t> read_file(const std::filesystem::path &path)
	{
		std::ifstream in(path, std::ios::binary);
		if (!in)
			throw ValidationError("cannot open " + path.string());
		return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
	}

	template<typename T>
	constexpr DType dtype_of()
	{
		return sizeof(T) == 4 ? DType::F32 : DType::F64;
	}
}

namespace hgfm
{
	template<typename T>
	ArchiveEntry ArchiveEntry::from_values(std::string name, ad::Shape shape, std::span<const T> values)
	{
		if (values.size() != shape.size())
			throw ShapeError("archive entry '" + name + "' payload does not match its shape");
		ArchiveEntry e;
		e.name = std::move(name);
		e.shape = shape;
		e.dtype = dtype_of<T>();
		e.payload.resize(values.size() * sizeof(T));
		std::memcpy(e.payload.data(), values.data(), e.payload.size());
		return e;
	}
	template<typename T>
	std::vector<T> ArchiveEntry::values() const
	{
		if (dtype != dtype_of<T>())
			throw ValidationError("archive entry '" + name + "' has a different precision than requested");
		std::vector<T> out(shape.size());
		std::memcpy(out.data(), payload.data(), payload.size());
		return out;
	}
	template ArchiveEntry ArchiveEntry::from_values<float>(std::string, ad::Shape, std::span<const float>);
	template ArchiveEntry ArchiveEntry::from_values<double>(std::string, ad::Shape, std::span<const double>);
	template std::vector<float> ArchiveEntry::values<float>() const;
	template std::vector<double> ArchiveEntry::values<double>() const;

	const ArchiveEntry* Archive::find(const std::string &name) const
	{
		for (const ArchiveEntry &e : entries)
			if (e.name == name)
				return &e;
		return nullptr;
	}

	void save_archive(const Archive &archive, const std::filesystem::path &path)
	{
		Writer w;
		w.raw(kMagic, 4);
		w.pod(kVersion);
		w.pod(static_cast<std::uint64_t>(archive.metadata.size()));
		w.raw(archive.metadata.data(), archive.metadata.size());
		w.pod(static_cast<std::uint64_t>(archive.entries.size()));
		for (const ArchiveEntry &e : archive.entries)
		{
			if (e.payload.size() != e.shape.size() * dtype_size(e.dtype))
				throw ShapeError("archive entry '" + e.name + "' payload does not match its shape");
			w.pod(static_cast<std::uint32_t>(e.name.size()));
			w.raw(e.name.data(), e.name.size());
			w.pod(static_cast<std::uint8_t>(e.dtype));
			w.pod(static_cast<std::uint64_t>(e.shape.rows));
			w.pod(static_cast<std::uint64_t>(e.shape.cols));
			w.raw(e.payload.data(), e.payload.size());
		}
		w.pod(hash_bytes(w.bytes.data(), w.bytes.size()));
		std::ofstream out(path, std::ios::binary);
		if (!out)
			throw ValidationError("cannot write " + path.string());
		out.write(reinterpret_cast<const char*>(w.bytes.data()), static_cast<std::streamsize>(w.bytes.size()));
	}

	Archive load_archive(const std::filesystem::path &path)
	{
		const std::vector<std::uint8_t> data = read_file(path);
		if (data.size() < 4 + sizeof(std::uint64_t) || std::memcmp(data.data(), kMagic, 4) != 0)
			throw ValidationError(path.filename().string() + ": not a checkpoint archive (magic mismatch)");
		const std::size_t body = data.size() - sizeof(std::uint64_t);
		std::uint64_t stored;
		std::memcpy(&stored, data.data() + body, sizeof(stored));
		if (stored != hash_bytes(data.data(), body))
			throw ValidationError(path.filename().string() + ": manifest hash mismatch");
		Reader r(data);
		r.take(4);
		if (r.pod<std::uint32_t>() != kVersion)
			throw ValidationError(path.filename().string() + ": unsupported archive version");
		Archive archive;
		const auto meta_len = r.pod<std::uint64_t>();
		const auto *meta = r.take(meta_len);
		archive.metadata.assign(reinterpret_cast<const char*>(meta), meta_len);
		const auto count = r.pod<std::uint64_t>();
		for (std::uint64_t i = 0; i < count; i++)
		{
			ArchiveEntry e;
			const auto name_len = r.pod<std::uint32_t>();
			const auto *name = r.take(name_len);
			e.name.assign(reinterpret_cast<const char*>(name), name_len);
			e.dtype = static_cast<DType>(r.pod<std::uint8_t>());
			e.shape.rows = r.pod<std::uint64_t>();
			e.shape.cols = r.pod<std::uint64_t>();
			const std::size_t n = e.shape.size() * dtype_size(e.dtype);
			const auto *payload = r.take(n);
			e.payload.assign(payload, payload + n);
			archive.entries.push_back(std::move(e));
		}
		if (r.position() != body)
			throw ValidationError(path.filename().string() + ": trailing bytes before manifest hash");
		return archive;
	}

	std::uint64_t archive_manifest_hash(const std::filesystem::path &path)
	{
		const std::vector<std::uint8_t> data = read_file(path);
		if (data.size() < sizeof(std::uint64_t))
			throw ValidationError(path.filename().string() + ": truncated archive");
		std::uint64_t stored;
		std::memcpy(&stored, data.data() + data.size() - sizeof(stored), sizeof(stored));
		return stored;
	}
}
